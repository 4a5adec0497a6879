"""Canonical JSON, exact rationals, and deterministic keyed draws.

All money and probability values are fractions.Fraction so mechanism
outcomes compare exactly; floats only appear at serialization boundaries
chosen by the caller.
"""
from __future__ import annotations

import hashlib
import json
from fractions import Fraction


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def draw_unit(seed: int, *labels: str) -> Fraction:
    """Deterministic pseudo-uniform value in [0, 1) keyed by seed and labels.

    Keyed draws (rather than a shared stream) keep every stochastic decision
    independent of evaluation order, which is what makes replay byte-stable.
    """
    payload = str(seed) + "\x1f" + "\x1f".join(labels)
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return Fraction(int.from_bytes(digest[:8], "big"), 1 << 64)


def draw_int(seed: int, lo: int, hi: int, *labels: str) -> int:
    """Deterministic integer in [lo, hi] inclusive."""
    if hi < lo:
        raise ValueError("empty range")
    span = hi - lo + 1
    return lo + int(draw_unit(seed, *labels) * span)


def to_fraction(value) -> Fraction:
    """Parse ints, exact decimal strings, "p/q" strings, and floats (via str)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    raise ValueError(f"not a number: {value!r}")


def frac_str(value: Fraction) -> str:
    """Canonical string form: integer if integral, else "p/q"."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"

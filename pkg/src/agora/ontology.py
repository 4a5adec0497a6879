"""Local ontology model: hierarchical tags, keyword tables, service mappings,
and decomposition templates.

Tags are dotted strings forming a forest via the parent map.  Each tag can
carry keyword phrases (for request parsing), required attribute names, and a
service mapping (the list of capability sets a solution for that tag needs).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import ParseError
from .util import to_fraction, frac_str


@dataclass(frozen=True)
class TemplatePart:
    capabilities: frozenset
    after: tuple  # indices of earlier parts this part depends on


@dataclass(frozen=True)
class DecompositionTemplate:
    pattern: frozenset
    parts: tuple  # of TemplatePart
    budget_split: tuple  # of Fraction, same length as parts

    def __post_init__(self):
        union = frozenset().union(*(p.capabilities for p in self.parts)) if self.parts else frozenset()
        if union != self.pattern:
            raise ParseError("template parts do not cover the pattern")
        if len(self.budget_split) != len(self.parts):
            raise ParseError("budget_split length mismatch")
        total = sum(self.budget_split, Fraction(0))
        if abs(total - 1) > Fraction(1, 10**9):
            raise ParseError("budget_split weights must sum to 1")
        for part in self.parts:
            for idx in part.after:
                if not (0 <= idx < len(self.parts)):
                    raise ParseError("template precedence index out of range")


@dataclass(frozen=True)
class ServiceEntry:
    capabilities: frozenset
    mode: str  # "negotiate" | "auction"


@dataclass
class Ontology:
    tags: frozenset
    parent: dict = field(default_factory=dict)
    keywords: dict = field(default_factory=dict)  # tag -> tuple of phrases
    required_attributes: dict = field(default_factory=dict)  # tag -> frozenset
    services: dict = field(default_factory=dict)  # tag -> tuple of ServiceEntry
    templates: tuple = ()

    def __post_init__(self):
        for child, par in self.parent.items():
            if child not in self.tags or par not in self.tags:
                raise ParseError(f"parent link references unknown tag: {child}->{par}")
        # acyclicity of the parent forest
        for tag in self.tags:
            seen = set()
            cur = tag
            while cur in self.parent:
                if cur in seen:
                    raise ParseError(f"parent relation has a cycle at {tag}")
                seen.add(cur)
                cur = self.parent[cur]
        for tag, phrases in self.keywords.items():
            if tag not in self.tags:
                raise ParseError(f"keywords for unknown tag {tag}")
            for phrase in phrases:
                if not phrase or phrase != phrase.lower():
                    raise ParseError(f"keyword phrases must be nonempty lowercase: {phrase!r}")

    def ancestors(self, tag: str) -> list:
        """Ancestors of tag, nearest first (excludes tag itself)."""
        out = []
        cur = tag
        while cur in self.parent:
            cur = self.parent[cur]
            out.append(cur)
        return out

    def distance_up(self, ancestor: str, tag: str) -> Optional[int]:
        """Edge count from tag up to ancestor, 0 if equal, None if unrelated."""
        if ancestor == tag:
            return 0
        dist = 0
        cur = tag
        while cur in self.parent:
            cur = self.parent[cur]
            dist += 1
            if cur == ancestor:
                return dist
        return None

    def closure(self, tags) -> set:
        """Tags plus all their ancestors."""
        out = set()
        for tag in tags:
            out.add(tag)
            out.update(self.ancestors(tag))
        return out

    def capability_universe(self) -> set:
        caps = set()
        for entries in self.services.values():
            for entry in entries:
                caps.update(entry.capabilities)
        return caps

    def to_json_dict(self) -> dict:
        return {
            "tags": sorted(self.tags),
            "parent": dict(sorted(self.parent.items())),
            "keywords": {t: sorted(p) for t, p in sorted(self.keywords.items())},
            "required_attributes": {t: sorted(a) for t, a in sorted(self.required_attributes.items())},
            "services": {
                t: [{"capabilities": sorted(e.capabilities), "mode": e.mode} for e in entries]
                for t, entries in sorted(self.services.items())
            },
            "templates": [
                {
                    "pattern": sorted(tpl.pattern),
                    "parts": [
                        {"capabilities": sorted(p.capabilities), "after": list(p.after)}
                        for p in tpl.parts
                    ],
                    "budget_split": [frac_str(w) for w in tpl.budget_split],
                }
                for tpl in self.templates
            ],
        }


_ONTOLOGY_KEYS = {"tags", "parent", "keywords", "required_attributes", "services", "templates"}


def ontology_from_json(obj: dict) -> Ontology:
    if not isinstance(obj, dict):
        raise ParseError("ontology must be an object")
    unknown = set(obj) - _ONTOLOGY_KEYS
    if unknown:
        raise ParseError(f"unknown ontology key: {sorted(unknown)[0]}", key=sorted(unknown)[0])
    tags = frozenset(obj.get("tags", []))
    services = {}
    for tag, entries in obj.get("services", {}).items():
        parsed = []
        for entry in entries:
            if isinstance(entry, str):
                parsed.append(ServiceEntry(frozenset([entry]), "negotiate"))
            elif isinstance(entry, dict):
                bad = set(entry) - {"capabilities", "mode"}
                if bad:
                    raise ParseError(f"unknown service entry key: {sorted(bad)[0]}", key=sorted(bad)[0])
                caps = entry["capabilities"]
                if isinstance(caps, str):
                    caps = [caps]
                mode = entry.get("mode", "negotiate")
                if mode not in ("negotiate", "auction"):
                    raise ParseError(f"bad service mode {mode!r}")
                parsed.append(ServiceEntry(frozenset(caps), mode))
            else:
                raise ParseError("service entry must be string or object")
        services[tag] = tuple(parsed)
    templates = []
    for tpl in obj.get("templates", []):
        bad = set(tpl) - {"pattern", "parts", "budget_split"}
        if bad:
            raise ParseError(f"unknown template key: {sorted(bad)[0]}", key=sorted(bad)[0])
        parts = tuple(
            TemplatePart(frozenset(p["capabilities"]), tuple(p.get("after", [])))
            for p in tpl["parts"]
        )
        split = tuple(to_fraction(w) for w in tpl["budget_split"])
        templates.append(DecompositionTemplate(frozenset(tpl["pattern"]), parts, split))
    return Ontology(
        tags=tags,
        parent=dict(obj.get("parent", {})),
        keywords={t: tuple(p) for t, p in obj.get("keywords", {}).items()},
        required_attributes={t: frozenset(a) for t, a in obj.get("required_attributes", {}).items()},
        services=services,
        templates=tuple(templates),
    )

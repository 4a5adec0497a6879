"""Scenario files: deterministic simulation inputs.

Strict JSON parsing: unknown keys are rejected everywhere so a typo never
silently changes a run.  The digest of the canonical serialization keys
replay and determinism checks.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ParseError, UnknownPolicyTarget
from .messaging import NetworkState, network_state_from_json
from .ontology import Ontology, ontology_from_json
from .provisioning import ProviderProfile
from .registrar import KINDS, Registration
from .util import canonical_json, sha256_hex, to_fraction


@dataclass
class Limits:
    r_max: int = 8
    theta: Fraction = Fraction(1, 2)
    K: int = 6
    critique_rounds: int = 4
    response_timeout_ticks: int = 100
    interactive_timeout_ticks: int = None


@dataclass
class ConsumerRequest:
    consumer_id: str
    text: str
    budget: Fraction
    attachments: dict = field(default_factory=dict)
    interaction: str = "cooperative"  # cooperative | competitive


@dataclass
class ExpertPolicy:
    verdicts: list = field(default_factory=list)  # one spec per round; last repeats

    def verdict_for(self, round_index: int) -> dict:
        if not self.verdicts:
            return {"verdict": "Approve"}
        return self.verdicts[min(round_index, len(self.verdicts) - 1)]


@dataclass
class ConsumerPolicy:
    inputs: dict = field(default_factory=dict)  # attribute -> value, supplied on demand
    confirm: bool = True
    abandon_after_events: int = None
    # per-prompt replies ({"attributes", "confirm"}), consumed in order; used
    # to make interactive runs replayable.  Prompts past the end fall back to
    # inputs/confirm.
    responses: list = None

    def response_for(self, prompt_index: int, asked):
        if self.responses is not None and prompt_index < len(self.responses):
            reply = self.responses[prompt_index]
            return dict(reply.get("attributes", {})), bool(reply.get("confirm", False))
        supplied = {k: v for k, v in self.inputs.items() if k in asked}
        return supplied, self.confirm


@dataclass
class SolutionExpertPolicy:
    critiques: list = field(default_factory=list)  # list per round of edit dicts

    def edits_for(self, round_index: int) -> list:
        if round_index < len(self.critiques):
            return self.critiques[round_index]
        return []


@dataclass
class Interactive:
    pass


@dataclass
class Scenario:
    seed: int
    ontology: Ontology
    registrations: list
    network: NetworkState
    network_changes: list  # (at_tick, NetworkState)
    request: ConsumerRequest
    policies: dict  # agent_id -> policy object
    profiles: dict  # agent_id -> ProviderProfile
    limits: Limits
    raw: dict  # validated source object, for digests and replay

    def digest(self) -> str:
        return sha256_hex(canonical_json(self.raw))


def _require_keys(obj: dict, allowed: set, where: str):
    if not isinstance(obj, dict):
        raise ParseError(f"{where} must be an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ParseError(f"unknown key {unknown[0]!r} in {where}", key=unknown[0])


_TOP_KEYS = {"seed", "ontology", "registrations", "network", "request", "policies", "limits"}
_REG_KEYS = {"agent_id", "kind", "environment", "domains", "capabilities",
             "price_schedule", "location"}
_REQ_KEYS = {"consumer_id", "text", "attachments", "budget", "interaction"}
_LIMIT_KEYS = {"R_max", "theta", "K", "critique_rounds", "response_timeout_ticks",
               "interactive_timeout_ticks"}
_NET_KEYS = {"base_latency", "jitter", "drop_probability", "partitions", "changes"}
_CONSUMER_POLICY_KEYS = {"role", "inputs", "confirm", "abandon_after_events",
                         "responses"}
_EXPERT_POLICY_KEYS = {"role", "verdicts"}
_SOLEXP_POLICY_KEYS = {"role", "critiques"}
_PROVIDER_POLICY_KEYS = {"role", "cost", "opening_markup", "concession_rate",
                         "failure_probability"}


def parse_scenario(obj: dict, allow_interactive: bool = False) -> Scenario:
    _require_keys(obj, _TOP_KEYS, "scenario")
    for required in ("ontology", "registrations", "request"):
        if required not in obj:
            raise ParseError(f"scenario missing {required!r}", key=required)
    seed = int(obj.get("seed", 0))
    ontology = ontology_from_json(obj["ontology"])

    registrations = []
    seen = set()
    for i, reg in enumerate(obj["registrations"]):
        _require_keys(reg, _REG_KEYS, f"registrations[{i}]")
        if reg["agent_id"] in seen:
            raise ParseError(f"duplicate registration {reg['agent_id']!r}")
        seen.add(reg["agent_id"])
        if reg.get("kind") not in KINDS:
            raise ParseError(f"unknown kind {reg.get('kind')!r}", key="kind")
        registrations.append(Registration(
            agent_id=reg["agent_id"],
            kind=reg["kind"],
            environment=reg["environment"],
            domains=frozenset(reg.get("domains", [])),
            capabilities=frozenset(reg.get("capabilities", [])),
            price_schedule=tuple(sorted(
                (cap, to_fraction(price))
                for cap, price in reg.get("price_schedule", {}).items()
            )),
            location=reg.get("location", ""),
            registered_at=i,
        ))

    net_obj = obj.get("network", {})
    _require_keys(net_obj, _NET_KEYS, "network")
    base_net = {k: v for k, v in net_obj.items() if k != "changes"}
    network = network_state_from_json(base_net)
    changes = []
    current = dict(base_net)
    for j, change in enumerate(net_obj.get("changes", [])):
        _require_keys(change, _NET_KEYS | {"at"}, f"network.changes[{j}]")
        if "at" not in change:
            raise ParseError("network change missing 'at'", key="at")
        current = dict(current)
        for key in ("base_latency", "jitter", "drop_probability", "partitions"):
            if key in change:
                current[key] = change[key]
        changes.append((int(change["at"]), network_state_from_json(
            {k: v for k, v in current.items() if k != "changes"})))

    req = obj["request"]
    _require_keys(req, _REQ_KEYS, "request")
    interaction = req.get("interaction", "cooperative")
    if interaction not in ("cooperative", "competitive"):
        raise ParseError(f"bad interaction {interaction!r}", key="interaction")
    request = ConsumerRequest(
        consumer_id=req["consumer_id"],
        text=req["text"],
        budget=to_fraction(req["budget"]),
        attachments=dict(req.get("attachments", {})),
        interaction=interaction,
    )

    lim_obj = obj.get("limits", {})
    _require_keys(lim_obj, _LIMIT_KEYS, "limits")
    limits = Limits(
        r_max=int(lim_obj.get("R_max", 8)),
        theta=to_fraction(lim_obj.get("theta", Fraction(1, 2))),
        K=int(lim_obj.get("K", 6)),
        critique_rounds=int(lim_obj.get("critique_rounds", 4)),
        response_timeout_ticks=int(lim_obj.get("response_timeout_ticks", 100)),
        interactive_timeout_ticks=lim_obj.get("interactive_timeout_ticks"),
    )

    policies = {}
    profiles = {}
    by_id = {r.agent_id: r for r in registrations}
    for agent_id, pol in obj.get("policies", {}).items():
        if agent_id not in by_id:
            raise UnknownPolicyTarget(agent_id)
        if pol == "interactive":
            if not allow_interactive:
                raise ParseError(
                    f"interactive policy for {agent_id!r} requires API mode")
            policies[agent_id] = Interactive()
            continue
        role = pol.get("role")
        if role == "consumer":
            _require_keys(pol, _CONSUMER_POLICY_KEYS, f"policies.{agent_id}")
            responses = pol.get("responses")
            if responses is not None:
                if not isinstance(responses, list) or any(
                        not isinstance(r, dict) for r in responses):
                    raise ParseError(
                        f"policies.{agent_id}.responses must be a list of objects",
                        key="responses")
                responses = [dict(r) for r in responses]
            policies[agent_id] = ConsumerPolicy(
                inputs=dict(pol.get("inputs", {})),
                confirm=bool(pol.get("confirm", True)),
                abandon_after_events=pol.get("abandon_after_events"),
                responses=responses,
            )
        elif role == "expert":
            _require_keys(pol, _EXPERT_POLICY_KEYS, f"policies.{agent_id}")
            policies[agent_id] = ExpertPolicy(verdicts=list(pol.get("verdicts", [])))
        elif role == "solution_expert":
            _require_keys(pol, _SOLEXP_POLICY_KEYS, f"policies.{agent_id}")
            policies[agent_id] = SolutionExpertPolicy(
                critiques=list(pol.get("critiques", [])))
        elif role == "provider":
            _require_keys(pol, _PROVIDER_POLICY_KEYS, f"policies.{agent_id}")
            cost = {}
            for key, value in pol.get("cost", {}).items():
                cost[frozenset(key.split("+"))] = to_fraction(value)
            profiles[agent_id] = ProviderProfile(
                agent_id=agent_id,
                cost=cost,
                opening_markup=to_fraction(pol.get("opening_markup", Fraction(1, 2))),
                concession_rate=to_fraction(pol.get("concession_rate", 1)),
                failure_probability=to_fraction(pol.get("failure_probability", 0)),
            )
            policies[agent_id] = profiles[agent_id]
        else:
            raise ParseError(f"unknown policy role {role!r} for {agent_id}", key="role")

    return Scenario(
        seed=seed,
        ontology=ontology,
        registrations=registrations,
        network=network,
        network_changes=changes,
        request=request,
        policies=policies,
        profiles=profiles,
        limits=limits,
        raw=obj,
    )


def load_scenario(path, allow_interactive: bool = False) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    return parse_scenario(obj, allow_interactive=allow_interactive)

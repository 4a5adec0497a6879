"""Central registry of agents: capabilities, domains, prices, environments.

Lookups are synchronous function calls (the registry is static knowledge,
not a network peer).  The registrar also issues introduction tokens that
let two agents in different environments exchange envelopes for a single
conversation.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import (
    DuplicateAgentId,
    EmptyCapabilities,
    EmptyDomains,
    SecurityViolation,
    UnknownAgent,
    UnknownTag,
)

KINDS = {"Consumer", "DomainExpert", "SolutionExpert", "Provider", "Orchestrator", "Dominant"}


@dataclass(frozen=True)
class Registration:
    agent_id: str
    kind: str
    environment: str
    domains: frozenset = frozenset()
    capabilities: frozenset = frozenset()
    price_schedule: tuple = ()  # ((capability, Fraction), ...) sorted
    location: str = ""
    registered_at: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.kind == "Provider" and not self.capabilities:
            raise EmptyCapabilities(self.agent_id)
        if self.kind in ("DomainExpert", "SolutionExpert") and not self.domains:
            raise EmptyDomains(self.agent_id)

    def price_of(self, capability: str):
        for cap, price in self.price_schedule:
            if cap == capability:
                return price
        return None  # absent => free


@dataclass(frozen=True)
class ExpertRanking:
    agent_id: str
    match_score: Fraction
    matched_tags: frozenset


@dataclass(frozen=True)
class IntroductionToken:
    token_id: str
    conversation_id: str
    parties: frozenset


class Registrar:
    def __init__(self):
        self._live = {}  # agent_id -> Registration
        self._tokens = {}  # conversation_id -> IntroductionToken
        self._token_counter = itertools.count(1)

    # -- registration --------------------------------------------------------

    def register(self, r: Registration) -> str:
        if r.agent_id in self._live:
            raise DuplicateAgentId(r.agent_id)
        self._live[r.agent_id] = r
        return r.agent_id

    def deregister(self, agent_id: str) -> None:
        if agent_id not in self._live:
            raise UnknownAgent(agent_id)
        del self._live[agent_id]

    def is_registered(self, agent_id: str) -> bool:
        return agent_id in self._live

    def registration(self, agent_id: str) -> Registration:
        try:
            return self._live[agent_id]
        except KeyError:
            raise UnknownAgent(agent_id) from None

    def environment_of(self, agent_id: str) -> str:
        return self.registration(agent_id).environment

    def agents(self):
        return list(self._live.values())

    # -- discovery -----------------------------------------------------------

    def find_experts(self, tags, ontology, kind: str = "DomainExpert") -> list:
        """Experts whose domains match a query tag exactly or as an ancestor.

        Per-tag weight: 1 for an exact domain match, 1/(1+d) when a domain is
        an ancestor at distance d; score is the mean over query tags, keeping
        it in (0, 1].  Sorted by (score desc, registered_at asc, agent_id asc).
        """
        tags = set(tags)
        if not tags:
            raise UnknownTag("empty tag set")
        for tag in tags:
            if tag not in ontology.tags:
                raise UnknownTag(tag)
        out = []
        for reg in self._live.values():
            if reg.kind != kind:
                continue
            total = Fraction(0)
            matched = set()
            for tag in tags:
                best = Fraction(0)
                for domain in reg.domains:
                    dist = ontology.distance_up(domain, tag)
                    if dist is None:
                        continue
                    weight = Fraction(1, 1 + dist)
                    if weight > best:
                        best = weight
                        matched.add(domain)
                total += best
            if total > 0:
                score = total / len(tags)
                out.append((score, reg.registered_at, reg.agent_id,
                            ExpertRanking(reg.agent_id, score, frozenset(matched))))
        out.sort(key=lambda item: (-item[0], item[1], item[2]))
        return [item[3] for item in out]

    def find_providers(self, required) -> list:
        """Providers whose capability set covers every required capability,
        ordered by (registered_at, agent_id)."""
        required = set(required)
        if not required:
            raise ValueError("required capability set must be nonempty")
        hits = [
            reg for reg in self._live.values()
            if reg.kind == "Provider" and required <= set(reg.capabilities)
        ]
        hits.sort(key=lambda r: (r.registered_at, r.agent_id))
        return [r.agent_id for r in hits]

    # -- introduction --------------------------------------------------------

    def introduce(self, requester: str, provider: str,
                  conversation_id: str = None) -> IntroductionToken:
        if requester not in self._live or provider not in self._live:
            raise SecurityViolation(f"{requester!r} or {provider!r} not registered")
        n = next(self._token_counter)
        token_id = f"tok-{n}"
        conversation_id = conversation_id or f"intro-{n}"
        token = IntroductionToken(token_id, conversation_id,
                                  frozenset({requester, provider}))
        self._tokens[conversation_id] = token
        return token

    def token_allows(self, conversation_id: str, a: str, b: str) -> bool:
        token = self._tokens.get(conversation_id)
        return token is not None and token.parties == frozenset({a, b})

"""Stage one: parse a consumer request and refine it with domain experts.

QuerySemantics is an immutable-ish value the loop transforms; all transitions
are pure functions so the engine (or a test) can drive the loop however it
likes while keeping the exit rules in one place:

  Identified    <=  unanimous Approve + empty missing_info + consumer confirm
  Unresolvable  <=  unanimous Reject, no experts, or the round budget R_max
                    is exhausted
  Abandoned     <=  consumer cancel (absorbing)
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import (
    EmptyRequest,
    InvalidFeedback,
    NoExpertsFound,
    NotIdentified,
    UnknownAttribute,
)
from .ontology import Ontology
from .util import canonical_json, frac_str

TERMINAL = {"Identified", "Unresolvable", "Abandoned"}


@dataclass
class QuerySemantics:
    request_id: str
    request_text: str
    tags: dict = field(default_factory=dict)  # tag -> Fraction confidence
    expert_tags: set = field(default_factory=set)  # tags asserted via ReferDomain
    attributes: dict = field(default_factory=dict)
    missing_info: set = field(default_factory=set)
    iteration: int = 0
    status: str = "Parsed"

    def final_tags(self, theta: Fraction) -> list:
        return sorted(t for t, c in self.tags.items() if c >= theta)

    def to_json_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "tags": {t: frac_str(c) for t, c in sorted(self.tags.items())},
            "expert_tags": sorted(self.expert_tags),
            "attributes": dict(sorted(self.attributes.items())),
            "missing_info": sorted(self.missing_info),
            "iteration": self.iteration,
            "status": self.status,
        }


@dataclass(frozen=True)
class ExpertFeedback:
    expert_id: str
    verdict: str  # Approve | NeedMoreData | ReferDomain | Reject
    attributes: frozenset = frozenset()
    tags: frozenset = frozenset()
    reason: str = ""
    comment: str = ""

    def __post_init__(self):
        if self.verdict not in ("Approve", "NeedMoreData", "ReferDomain", "Reject"):
            raise InvalidFeedback(f"unknown verdict {self.verdict!r}")
        if self.verdict == "NeedMoreData" and not self.attributes:
            raise InvalidFeedback("NeedMoreData requires attribute names")
        if self.verdict == "ReferDomain" and not self.tags:
            raise InvalidFeedback("ReferDomain requires tags")


@dataclass
class DescriptorSet:
    problem_description: dict
    vocabulary: dict
    auxiliary: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "problem_description": self.problem_description,
            "vocabulary": self.vocabulary,
            "auxiliary": list(self.auxiliary),
        }


def parse_request(text: str, attachments: dict, ontology: Ontology,
                  theta: Fraction, request_id: str = "r1") -> QuerySemantics:
    """Keyword-phrase matching: per-tag confidence is the fraction of the
    tag's keyword phrases present as substrings of the lowercased text."""
    if not text or not text.strip():
        raise EmptyRequest("request text is empty")
    lowered = text.lower()
    tags = {}
    for tag, phrases in ontology.keywords.items():
        if not phrases:
            continue
        hits = sum(1 for phrase in phrases if phrase in lowered)
        if hits:
            tags[tag] = Fraction(hits, len(phrases))
    attributes = dict(attachments or {})
    missing = set()
    for tag, conf in tags.items():
        if conf >= theta:
            missing |= set(ontology.required_attributes.get(tag, ()))
    missing -= set(attributes)
    return QuerySemantics(
        request_id=request_id,
        request_text=text,
        tags=tags,
        attributes=attributes,
        missing_info=missing,
        iteration=0,
        status="Parsed",
    )


def solicit_feedback(sem: QuerySemantics, experts: list) -> tuple:
    """Mark the semantics under review; returns (sem, [(expert, conversation)]).

    The caller owns actually sending the envelopes; conversation ids are
    deterministic so traces replay."""
    if sem.status not in ("Parsed", "UnderReview"):
        raise ValueError(f"cannot solicit in status {sem.status}")
    if not experts:
        raise NoExpertsFound(sem.request_id)
    sem = copy.deepcopy(sem)
    sem.status = "UnderReview"
    prefix = f"ident-{sem.request_id}-r{sem.iteration}"
    return sem, [(expert, f"{prefix}-{expert}") for expert in experts]


def apply_feedback(sem: QuerySemantics, feedbacks: list, consumer_input: dict,
                   ontology: Ontology, theta: Fraction) -> QuerySemantics:
    if sem.status not in ("UnderReview", "AwaitingConsumer"):
        raise ValueError(f"cannot apply feedback in status {sem.status}")
    sem = copy.deepcopy(sem)
    requested = set(sem.missing_info)
    for fb in feedbacks:
        if fb.verdict == "ReferDomain":
            for tag in sorted(fb.tags):
                if tag not in ontology.tags:
                    raise InvalidFeedback(f"referred tag {tag!r} not in ontology")
                if sem.tags.get(tag, Fraction(0)) < theta:
                    sem.tags[tag] = theta
                sem.expert_tags.add(tag)
                sem.missing_info |= (
                    set(ontology.required_attributes.get(tag, ())) - set(sem.attributes)
                )
        elif fb.verdict == "NeedMoreData":
            requested |= set(fb.attributes)
            sem.missing_info |= set(fb.attributes) - set(sem.attributes)
    askable = requested | set().union(
        *(set(v) for v in ontology.required_attributes.values())
    ) if ontology.required_attributes else requested
    for name, value in sorted((consumer_input or {}).items()):
        if name not in askable:
            raise UnknownAttribute(name)
        sem.attributes[name] = value
        sem.missing_info.discard(name)
    sem.iteration += 1
    return sem


def step_identification(sem: QuerySemantics, round_feedbacks: list,
                        consumer_confirmed: bool, r_max: int) -> QuerySemantics:
    """Decide the round's outcome after feedback has been applied."""
    if sem.status in TERMINAL:
        raise ValueError(f"already terminal: {sem.status}")
    sem = copy.deepcopy(sem)
    verdicts = [fb.verdict for fb in round_feedbacks]
    if verdicts and all(v == "Reject" for v in verdicts):
        sem.status = "Unresolvable"
        return sem
    if (verdicts and all(v == "Approve" for v in verdicts)
            and not sem.missing_info and consumer_confirmed):
        sem.status = "Identified"
        return sem
    if sem.iteration >= r_max:
        sem.status = "Unresolvable"
        return sem
    sem.status = "AwaitingConsumer" if sem.missing_info else "UnderReview"
    return sem


def abandon(sem: QuerySemantics) -> QuerySemantics:
    sem = copy.deepcopy(sem)
    sem.status = "Abandoned"
    return sem


def emit_descriptors(sem: QuerySemantics, ontology: Ontology,
                     theta: Fraction) -> DescriptorSet:
    if sem.status != "Identified":
        raise NotIdentified(sem.status)
    final = sem.final_tags(theta)
    vocab_tags = sorted(ontology.closure(final))
    vocabulary = {
        "tags": vocab_tags,
        "parent": {t: ontology.parent[t] for t in vocab_tags if t in ontology.parent},
    }
    problem = {
        "request_id": sem.request_id,
        "text": sem.request_text,
        "tags": final,
        "attributes": dict(sorted(sem.attributes.items())),
    }
    return DescriptorSet(problem_description=problem, vocabulary=vocabulary,
                         auxiliary=[])


def run_identification(sem: QuerySemantics, experts: list, feedback_policy,
                       consumer_policy, ontology: Ontology, theta: Fraction,
                       r_max: int) -> QuerySemantics:
    """Reference loop driver used by tests and scripted simulations.

    feedback_policy(round_index, sem, experts) -> list of ExpertFeedback
    consumer_policy(round_index, sem) -> (input map, confirmed: bool)
    """
    round_index = 0
    while sem.status not in TERMINAL:
        if not experts:
            sem = copy.deepcopy(sem)
            sem.status = "Unresolvable"
            break
        if sem.status == "AwaitingConsumer":
            # consumer has responded by the time the next round starts
            sem = copy.deepcopy(sem)
            sem.status = "UnderReview"
        sem, _convs = solicit_feedback(sem, experts)
        feedbacks = feedback_policy(round_index, sem, experts)
        consumer_input, confirmed = consumer_policy(round_index, sem)
        sem = apply_feedback(sem, feedbacks, consumer_input, ontology, theta)
        sem = step_identification(sem, feedbacks, confirmed, r_max)
        round_index += 1
    return sem

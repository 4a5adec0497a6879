"""Stage two, part B: match providers to atomic tasks, close each task via
cooperative/competitive negotiation or a reverse sealed-bid auction, then
execute under dominant-agent monitoring with reassignment on failure.

All prices are exact rationals.  A provider never offers below its true
cost, so provider utility is nonnegative by construction; prices never
exceed the task budget (the reserve), so consumer utility is nonnegative
too.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import MissingProfile, UnmappedTask
from .planner import Task, Workflow
from .util import draw_unit, frac_str, to_fraction


@dataclass
class ProviderProfile:
    agent_id: str
    cost: dict  # frozenset(capabilities) -> Fraction
    opening_markup: Fraction = Fraction(1, 2)
    concession_rate: Fraction = Fraction(1)
    failure_probability: Fraction = Fraction(0)

    def __post_init__(self):
        self.opening_markup = Fraction(self.opening_markup)
        self.concession_rate = Fraction(self.concession_rate)
        self.failure_probability = Fraction(self.failure_probability)
        if self.opening_markup < 0:
            raise ValueError("opening_markup must be >= 0")
        if not 0 < self.concession_rate <= 1:
            raise ValueError("concession_rate must be in (0,1]")
        if not 0 <= self.failure_probability <= 1:
            raise ValueError("failure_probability must be in [0,1]")
        for key, value in self.cost.items():
            if value < 0:
                raise ValueError(f"negative cost for {sorted(key)}")

    def cost_of(self, capabilities: frozenset) -> Fraction:
        key = frozenset(capabilities)
        if key in self.cost:
            return self.cost[key]
        singles = [frozenset([c]) for c in key]
        if all(s in self.cost for s in singles):
            return sum((self.cost[s] for s in singles), Fraction(0))
        raise MissingProfile(f"{self.agent_id} has no cost for {sorted(key)}")


@dataclass
class Contract:
    contract_id: str
    task_id: str
    provider: str
    price: Fraction
    formed_at: int
    status: str = "Active"  # Active | Completed | Failed | Reassigned

    def to_json_dict(self) -> dict:
        return {
            "contract_id": self.contract_id,
            "task_id": self.task_id,
            "provider": self.provider,
            "price": frac_str(self.price),
            "formed_at": self.formed_at,
            "status": self.status,
        }


@dataclass(frozen=True)
class NoAgreement:
    reason: str = "no candidate crossed within the round budget"


@dataclass(frozen=True)
class NoWinner:
    reason: str = "all bids above the reserve"


@dataclass
class UtilityReport:
    provider_utilities: dict  # agent_id -> Fraction
    consumer_utility: Fraction
    social_welfare: Fraction

    def to_json_dict(self) -> dict:
        return {
            "provider_utilities": {
                a: frac_str(u) for a, u in sorted(self.provider_utilities.items())
            },
            "consumer_utility": frac_str(self.consumer_utility),
            "social_welfare": frac_str(self.social_welfare),
        }


def map_providers(workflow: Workflow, registrar) -> dict:
    """Candidate lists per task, in registrar order.  Tasks are
    all-or-nothing, so a candidate must cover the full capability set."""
    out = {}
    for tid in workflow.topo_order():
        task = workflow.tasks[tid]
        if task.atomicity != "Atomic":
            raise UnmappedTask(f"{tid} is not Atomic")
        candidates = registrar.find_providers(task.required_capabilities)
        if not candidates:
            raise UnmappedTask(tid)
        out[tid] = candidates
    return out


def consumer_offer(budget: Fraction, k: int, K: int) -> Fraction:
    return budget * (Fraction(1, 2) + Fraction(k, 2 * K))


def provider_ask(cost: Fraction, markup: Fraction, k: int, K: int) -> Fraction:
    return max(cost, cost * (1 + markup * (1 - Fraction(k, K))))


def negotiate(task: Task, candidates: list, profiles: dict, mode: str,
              K: int, now: int = 0, contract_id: str = None):
    """Close a task with one provider.

    Cooperative: true costs are revealed; the cheapest capable provider wins
    at the midpoint of cost and budget (equal surplus split).

    Competitive: alternating offers against each candidate independently
    over rounds k = 0..K; deal at the first k where the consumer offer
    b_k = budget*(1/2 + k/2K) meets the ask a_k = max(cost, cost*(1+markup*(1-k/K))),
    at price (b_k + a_k)/2.  The cheapest deal wins; candidate order breaks ties.

    Returns (Contract | NoAgreement, events) where events are mechanism-round
    records for the log.
    """
    if not candidates:
        raise ValueError("candidates must be nonempty")
    if task.budget <= 0:
        raise ValueError("task budget must be > 0")
    events = []
    budget = task.budget
    if mode == "Cooperative":
        best = None
        for rank, cand in enumerate(candidates):
            cost = profiles[cand].cost_of(task.required_capabilities)
            events.append({"event": "offer", "task_id": task.task_id,
                           "provider": cand, "round": 0,
                           "ask": frac_str(cost), "mode": "cooperative"})
            if cost > budget:
                continue
            if best is None or cost < best[0]:
                best = (cost, rank, cand)
        if best is None:
            return NoAgreement("minimum cost exceeds budget"), events
        cost, _, winner = best
        price = (cost + budget) / 2
    elif mode == "Competitive":
        deals = []
        for rank, cand in enumerate(candidates):
            cost = profiles[cand].cost_of(task.required_capabilities)
            markup = profiles[cand].opening_markup
            for k in range(K + 1):
                b = consumer_offer(budget, k, K)
                a = provider_ask(cost, markup, k, K)
                events.append({"event": "offer", "task_id": task.task_id,
                               "provider": cand, "round": k,
                               "offer": frac_str(b), "ask": frac_str(a),
                               "mode": "competitive"})
                if b >= a:
                    deals.append(((b + a) / 2, rank, cand, k))
                    break
        if not deals:
            return NoAgreement(), events
        price, _, winner, k = min(deals)
        events.append({"event": "agreement", "task_id": task.task_id,
                       "provider": winner, "round": k, "price": frac_str(price)})
    else:
        raise ValueError(f"unknown negotiation mode {mode!r}")
    contract = Contract(
        contract_id=contract_id or f"c-{task.task_id}",
        task_id=task.task_id,
        provider=winner,
        price=price,
        formed_at=now,
    )
    return contract, events


def run_auction(task: Task, candidates: list, profiles: dict, seed: int,
                auction_label: str, now: int = 0, contract_id: str = None):
    """Reverse sealed-bid first-price auction with reserve = task budget.

    Each candidate bids cost*(1 + markup*u) with u a keyed draw in [0,1);
    lowest bid at or under the reserve wins at its bid, earliest-registered
    candidate breaking ties.
    """
    if not candidates:
        raise ValueError("candidates must be nonempty")
    reserve = task.budget
    bids = []
    for rank, cand in enumerate(candidates):
        cost = profiles[cand].cost_of(task.required_capabilities)
        markup = profiles[cand].opening_markup
        u = draw_unit(seed, "auction", auction_label, cand)
        bid = max(cost, cost * (1 + markup * u))
        bids.append((cand, bid, rank))
    winner = None
    for cand, bid, rank in bids:
        if bid > reserve:
            continue
        if winner is None or bid < winner[1] or (bid == winner[1] and rank < winner[2]):
            winner = (cand, bid, rank)
    events = [
        {"event": "bid", "task_id": task.task_id, "provider": cand,
         "amount": frac_str(bid)}
        for cand, bid, _ in bids
    ]
    if winner is None:
        return NoWinner(), events
    cand, bid, _ = winner
    contract = Contract(
        contract_id=contract_id or f"c-{task.task_id}",
        task_id=task.task_id,
        provider=cand,
        price=bid,
        formed_at=now,
    )
    return contract, events


def compute_utilities(contracts: list, profiles: dict, tasks: dict,
                      consumer_valuation: Fraction) -> UtilityReport:
    """Provider utility = price - cost; consumer = valuation - total price.
    Free services with positive cost still subtract from welfare."""
    provider_utils = {}
    total_price = Fraction(0)
    for contract in contracts:
        if contract.provider not in profiles:
            raise MissingProfile(contract.provider)
        task = tasks[contract.task_id]
        cost = profiles[contract.provider].cost_of(task.required_capabilities)
        provider_utils[contract.provider] = (
            provider_utils.get(contract.provider, Fraction(0))
            + contract.price - cost
        )
        total_price += contract.price
    consumer_utility = Fraction(consumer_valuation) - total_price
    welfare = consumer_utility + sum(provider_utils.values(), Fraction(0))
    return UtilityReport(provider_utils, consumer_utility, welfare)


@dataclass
class ExecutionReport:
    status: str  # "Provisioned" | "WorkflowFailed"
    contracts: list = field(default_factory=list)  # final Completed contracts
    all_contracts: list = field(default_factory=list)  # incl. Failed
    reassignments: int = 0
    blocking_task: str = None
    events: list = field(default_factory=list)


def execute(workflow: Workflow, contracts: dict, candidates_map: dict,
            profiles: dict, dominant: str, seed: int, rerun_mechanism,
            now: int = 0, registrar=None) -> ExecutionReport:
    """Run tasks in topological order; a contracted provider fails with its
    failure_probability (keyed draw per attempt).  A provider that left the
    registry counts as failed outright.  On failure the dominant agent
    re-runs the task's mechanism over the remaining candidates.

    rerun_mechanism(task, remaining_candidates, attempt) -> (Contract | sentinel, events)
    """
    def gone(agent_id):
        return registrar is not None and not registrar.is_registered(agent_id)

    report = ExecutionReport(status="Provisioned")
    all_contracts = []
    for tid in workflow.topo_order():
        task = workflow.tasks[tid]
        contract = contracts[tid]
        failed_providers = []
        attempt = 0
        while True:
            profile = profiles[contract.provider]
            u = draw_unit(seed, "failure", tid, contract.provider, str(attempt))
            if gone(contract.provider) or u < profile.failure_probability:
                contract.status = "Failed"
                all_contracts.append(contract)
                failed_providers.append(contract.provider)
                report.events.append({
                    "event": "failure", "task_id": tid,
                    "provider": contract.provider, "attempt": attempt,
                })
                remaining = [c for c in candidates_map[tid]
                             if c not in failed_providers and not gone(c)]
                if not remaining:
                    report.status = "WorkflowFailed"
                    report.blocking_task = tid
                    report.all_contracts = all_contracts
                    return report
                attempt += 1
                result, _events = rerun_mechanism(task, remaining, attempt)
                if isinstance(result, (NoAgreement, NoWinner)):
                    report.status = "WorkflowFailed"
                    report.blocking_task = tid
                    report.all_contracts = all_contracts
                    return report
                report.reassignments += 1
                report.events.append({
                    "event": "reassign", "task_id": tid, "by": dominant,
                    "provider": result.provider, "price": frac_str(result.price),
                })
                contract = result
            else:
                contract.status = "Completed"
                all_contracts.append(contract)
                report.contracts.append(contract)
                report.events.append({
                    "event": "task_completed", "task_id": tid,
                    "provider": contract.provider,
                })
                break
    report.all_contracts = all_contracts
    return report

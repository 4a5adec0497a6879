"""Environment-isolated message routing over a simulated network.

A single Router owns the clock and the delivery queue.  Sends are gated by
the registrar (registration + environment isolation); delivery timing comes
from the network state and keyed deterministic draws, so a fixed seed and
send sequence always produce the same trace.

Partition semantics: a message whose endpoints sit in different partition
cells at its delivery tick is held, never dropped; healing the partition
reschedules held messages at heal_tick + base_latency.  Drops are decided
at send time.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .errors import BodySchemaError, OverlappingPartitionCells, SequenceViolation
from .util import draw_int, draw_unit, frac_str

MSG_TYPES = {
    "Request": frozenset({"kind"}),
    "Ack": frozenset({"of"}),
    "Feedback": frozenset({"verdict"}),
    "Offer": frozenset({"task_id", "amount", "round"}),
    "Bid": frozenset({"task_id", "amount"}),
    "Award": frozenset({"task_id", "price"}),
    "Status": frozenset({"state"}),
    "Cancel": frozenset({"reason"}),
    "Introduce": frozenset({"token", "peer"}),
}


@dataclass(frozen=True)
class Envelope:
    conversation_id: str
    sender: str
    recipient: str
    environment: str
    msg_type: str
    seq: int
    body: dict

    def __post_init__(self):
        if self.msg_type not in MSG_TYPES:
            raise BodySchemaError(f"unknown msg_type {self.msg_type!r}")
        if not isinstance(self.body, dict):
            raise BodySchemaError("body must be an object")
        missing = MSG_TYPES[self.msg_type] - set(self.body)
        if missing:
            raise BodySchemaError(
                f"{self.msg_type} body missing keys {sorted(missing)}"
            )

    def to_json_dict(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "sender": self.sender,
            "recipient": self.recipient,
            "environment": self.environment,
            "msg_type": self.msg_type,
            "seq": self.seq,
            "body": self.body,
        }


def _check_partitions(partitions) -> tuple:
    cells = tuple(frozenset(c) for c in partitions)
    seen = set()
    for cell in cells:
        if cell & seen:
            raise OverlappingPartitionCells(str(sorted(cell & seen)))
        seen |= cell
    return cells


@dataclass
class NetworkState:
    base_latency: int = 0
    jitter: int = 0
    drop_probability: Fraction = Fraction(0)
    partitions: tuple = ()

    def __post_init__(self):
        if self.base_latency < 0 or self.jitter < 0:
            raise ValueError("latency and jitter must be >= 0")
        self.drop_probability = Fraction(self.drop_probability)
        if not 0 <= self.drop_probability <= 1:
            raise ValueError("drop_probability must be in [0,1]")
        self.partitions = _check_partitions(self.partitions)

    def cell_of(self, agent_id: str):
        """Index of the agent's partition cell; unlisted agents share an
        implicit extra cell."""
        for i, cell in enumerate(self.partitions):
            if agent_id in cell:
                return i
        return -1

    def separated(self, a: str, b: str) -> bool:
        if not self.partitions:
            return False
        return self.cell_of(a) != self.cell_of(b)


@dataclass
class SendReceipt:
    status: str  # "Queued" | "Rejected"
    reason: Optional[str] = None
    scheduled_tick: Optional[int] = None


class Router:
    """Discrete-event message router gated by a registrar snapshot."""

    def __init__(self, registrar, seed: int = 0, state: Optional[NetworkState] = None,
                 registrar_agent_id: str = "registrar",
                 on_event: Optional[Callable] = None):
        self.registrar = registrar
        self.seed = seed
        self.state = state or NetworkState()
        self.registrar_agent_id = registrar_agent_id
        self.on_event = on_event or (lambda tick, event, **detail: None)
        self.now = 0
        self._queue = []  # heap of (tick, sender, seq, conversation, n, envelope)
        self._push_counter = 0
        self._held = []  # list of (orig_tick, envelope)
        self._last_seq = {}  # (sender, conversation) -> seq
        self._last_sched = {}  # (sender, conversation) -> tick
        self._changes = []  # heap of (tick, order, NetworkState)
        self._change_counter = 0

    def _push(self, sched: int, env: Envelope) -> None:
        self._push_counter += 1
        heapq.heappush(
            self._queue,
            (sched, env.sender, env.seq, env.conversation_id, self._push_counter, env),
        )

    # -- commands ------------------------------------------------------------

    def send(self, env: Envelope, now: int) -> SendReceipt:
        if now < self.now:
            raise ValueError("send in the past")
        reg = self.registrar
        if not reg.is_registered(env.sender) or not reg.is_registered(env.recipient):
            return SendReceipt("Rejected", "SecurityViolation")
        sender_env = reg.environment_of(env.sender)
        recipient_env = reg.environment_of(env.recipient)
        if sender_env != recipient_env:
            bridged = (
                env.sender == self.registrar_agent_id
                or env.recipient == self.registrar_agent_id
                or reg.token_allows(env.conversation_id, env.sender, env.recipient)
            )
            if not bridged:
                return SendReceipt("Rejected", "EnvironmentViolation")
        key = (env.sender, env.conversation_id)
        last = self._last_seq.get(key)
        if last is not None and env.seq <= last:
            raise SequenceViolation(
                f"seq {env.seq} not above {last} for {key}"
            )
        self._last_seq[key] = env.seq

        label = (env.sender, env.conversation_id, str(env.seq))
        state = self._state_at(now)
        if state.drop_probability > 0:
            if draw_unit(self.seed, "drop", *label) < state.drop_probability:
                self.on_event(now, "drop", envelope=env)
                return SendReceipt("Queued", scheduled_tick=None)
        delay = state.base_latency
        if state.jitter > 0:
            delay += draw_int(self.seed, 0, state.jitter, "jitter", *label)
        sched = now + delay
        # per-(sender, conversation) FIFO: never schedule before an earlier seq
        sched = max(sched, self._last_sched.get(key, 0))
        self._last_sched[key] = sched
        self._push(sched, env)
        return SendReceipt("Queued", scheduled_tick=sched)

    def set_network(self, state: NetworkState, at: int) -> None:
        if at < self.now:
            raise ValueError("set_network in the past")
        self._change_counter += 1
        heapq.heappush(self._changes, (at, self._change_counter, state))

    def next_event_tick(self) -> Optional[int]:
        ticks = []
        if self._queue:
            ticks.append(self._queue[0][0])
        if self._changes:
            ticks.append(self._changes[0][0])
        return min(ticks) if ticks else None

    def has_held(self) -> bool:
        return bool(self._held)

    def advance(self, until: int) -> list:
        """Deliver everything scheduled in (now, until], in (tick, sender, seq)
        order, applying scheduled network changes along the way."""
        if until < self.now:
            raise ValueError("advance must not go backwards")
        delivered = []
        while True:
            next_change = self._changes[0][0] if self._changes else None
            next_msg = self._queue[0][0] if self._queue else None
            candidates = [t for t in (next_change, next_msg) if t is not None and t <= until]
            if not candidates:
                break
            tick = min(candidates)
            if next_change is not None and next_change == tick and (
                next_msg is None or next_change <= next_msg
            ):
                _, _, state = heapq.heappop(self._changes)
                self._apply_state(state, tick)
                continue
            sched, sender, seq, _conv, _n, env = heapq.heappop(self._queue)
            if self._blocked(env):
                self._held.append((sched, env))
                self.on_event(sched, "hold", envelope=env)
                continue
            delivered.append((sched, env))
            self.on_event(sched, "deliver", envelope=env)
        self.now = until
        return delivered

    # -- internals -----------------------------------------------------------

    def _blocked(self, env: Envelope) -> bool:
        if self.state.separated(env.sender, env.recipient):
            return True
        # FIFO: hold if an earlier message of the same (sender, conversation)
        # is itself held
        for _, held in self._held:
            if (held.sender, held.conversation_id) == (env.sender, env.conversation_id) \
                    and held.seq < env.seq:
                return True
        return False

    def _state_at(self, tick: int) -> NetworkState:
        """State effective at `tick`, accounting for changes scheduled at or
        before it that have not been applied yet (sends may race changes)."""
        state = self.state
        for at, _, pending in sorted(self._changes):
            if at <= tick:
                state = pending
        return state

    def _apply_state(self, state: NetworkState, tick: int) -> None:
        self.state = state
        if not self._held:
            return
        still_held = []
        releasable = [
            (orig, env) for orig, env in self._held
            if not state.separated(env.sender, env.recipient)
        ]
        still_held = [
            entry for entry in self._held
            if state.separated(entry[1].sender, entry[1].recipient)
        ]
        self._held = still_held
        for orig, env in releasable:
            sched = tick + state.base_latency
            key = (env.sender, env.conversation_id)
            sched = max(sched, self._last_sched.get(key, 0))
            self._last_sched[key] = sched
            self._push(sched, env)
            self.on_event(tick, "release", envelope=env)


def network_state_from_json(obj: dict) -> NetworkState:
    from .errors import ParseError
    allowed = {"base_latency", "jitter", "drop_probability", "partitions"}
    unknown = set(obj) - allowed
    if unknown:
        raise ParseError(f"unknown network key: {sorted(unknown)[0]}", key=sorted(unknown)[0])
    from .util import to_fraction
    return NetworkState(
        base_latency=int(obj.get("base_latency", 0)),
        jitter=int(obj.get("jitter", 0)),
        drop_probability=to_fraction(obj.get("drop_probability", 0)),
        partitions=tuple(frozenset(cell) for cell in obj.get("partitions", [])),
    )

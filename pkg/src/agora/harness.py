"""Run records, replay, and metrics.

A record is JSON lines: a header object carrying the scenario (so replay is
self-contained), then one object per event.  Truncating the file at any line
boundary leaves a parseable prefix.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .engine import Engine
from .errors import NonTerminalRecord, ReplayDivergence, UnknownDigest
from .scenario import Scenario, parse_scenario
from .util import canonical_json, sha256_hex


@dataclass
class RunRecord:
    run_id: str
    scenario_digest: str
    seed: int
    events: list
    outcome: str = None
    scenario_raw: dict = None

    def event_lines(self) -> list:
        return [canonical_json(e) for e in self.events]

    def log_hash(self) -> str:
        return sha256_hex("\n".join(self.event_lines()))

    def to_jsonl(self) -> str:
        header = {
            "run_id": self.run_id,
            "scenario_digest": self.scenario_digest,
            "seed": self.seed,
            "scenario": self.scenario_raw,
        }
        return "\n".join([canonical_json(header)] + self.event_lines()) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def run(scenario: Scenario, seed: int = None, control=None) -> RunRecord:
    engine = Engine(scenario, seed=seed, control=control)
    outcome = engine.run()
    # interactive runs embed a scripted equivalent of the human input so the
    # record is self-contained; for scripted runs this is scenario.raw itself
    raw = engine.replayable_raw()
    digest = sha256_hex(canonical_json(raw))
    effective_seed = scenario.seed if seed is None else seed
    return RunRecord(
        run_id=f"{digest[:12]}-{effective_seed}",
        scenario_digest=digest,
        seed=effective_seed,
        events=engine.events,
        outcome=outcome,
        scenario_raw=raw,
    )


def load_record(path) -> RunRecord:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise UnknownDigest("empty record")
    header = json.loads(lines[0])
    events = [json.loads(line) for line in lines[1:] if line.strip()]
    outcome = None
    for event in events:
        if event.get("event") == "outcome":
            outcome = event.get("detail", {}).get("outcome")
    return RunRecord(
        run_id=header.get("run_id"),
        scenario_digest=header.get("scenario_digest"),
        seed=header.get("seed", 0),
        events=events,
        outcome=outcome,
        scenario_raw=header.get("scenario"),
    )


def replay(record: RunRecord) -> RunRecord:
    """Re-execute the record's scenario and byte-compare the logs."""
    if record.scenario_raw is None:
        raise UnknownDigest(record.scenario_digest or "<missing>")
    scenario = parse_scenario(record.scenario_raw)
    if scenario.digest() != record.scenario_digest:
        raise UnknownDigest(record.scenario_digest)
    fresh = run(scenario, seed=record.seed)
    old_lines = record.event_lines()
    new_lines = fresh.event_lines()
    for i, (a, b) in enumerate(zip(old_lines, new_lines), start=1):
        if a != b:
            raise ReplayDivergence(i, a, b)
    if len(old_lines) != len(new_lines):
        n = min(len(old_lines), len(new_lines)) + 1
        raise ReplayDivergence(n, "<length mismatch>", "<length mismatch>")
    return fresh


def report(record: RunRecord) -> dict:
    """Summary metrics for a terminal record."""
    outcome_detail = None
    for event in record.events:
        if event.get("event") == "outcome":
            outcome_detail = event.get("detail", {})
    if outcome_detail is None:
        raise NonTerminalRecord(record.run_id)
    identification_rounds = sum(1 for e in record.events if e["event"] == "solicit")
    critique_rounds = sum(1 for e in record.events if e["event"] == "critique_round")
    reassignments = sum(1 for e in record.events if e["event"] == "reassign")
    wall_ticks = max((e["tick"] for e in record.events), default=0)
    return {
        "outcome": outcome_detail.get("outcome"),
        "identification_rounds": identification_rounds,
        "critique_rounds_used": critique_rounds,
        "tasks": outcome_detail.get("tasks", 0),
        "contracts": outcome_detail.get("contracts", 0),
        "total_price": outcome_detail.get("total_price", "0"),
        "social_welfare": outcome_detail.get("social_welfare", "0"),
        "reassignments": reassignments,
        "wall_ticks": wall_ticks,
    }


class RunControl:
    """Bridge between an engine thread and the HTTP API.

    The engine calls emit/await_input/poll_abandon/finish; API handlers call
    post_command/snapshot/wait_events.  Commands are applied in arrival order
    through a single queue, keeping the engine the only mutator.
    """

    def __init__(self, timeout: float = None):
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self.events = []
        self.pending_prompt = None
        self.outcome = None
        self.rejection = None
        self._commands = []
        self._abandon = False
        self.timeout = timeout

    # engine side

    def emit(self, event: dict):
        with self._cond:
            self.events.append(event)
            self._cond.notify_all()

    def await_input(self, prompt: dict) -> dict:
        with self._cond:
            self.pending_prompt = prompt
            self._cond.notify_all()
            while True:
                for i, (cmd_prompt_type, agent, payload) in enumerate(self._commands):
                    if cmd_prompt_type == prompt["type"] and (
                            prompt.get("agent_id") in (None, agent) or agent is None):
                        self._commands.pop(i)
                        self.pending_prompt = None
                        return payload
                if self._abandon and prompt["type"] == "consumer-input":
                    self.pending_prompt = None
                    return {"abandon": True}
                ok = self._cond.wait(timeout=self.timeout)
                if not ok and self.timeout is not None:
                    self.pending_prompt = None
                    return {"abandon": True}

    def poll_abandon(self) -> bool:
        with self._lock:
            return self._abandon

    def abandon_rejected(self, reason: str):
        with self._cond:
            self.rejection = reason
            self._abandon = False
            self._cond.notify_all()

    def finish(self, outcome: str):
        with self._cond:
            self.outcome = outcome
            self.pending_prompt = None
            self._cond.notify_all()

    # API side

    def post_command(self, prompt_type: str, agent_id, payload: dict) -> bool:
        """Queue a command if it matches the pending prompt; False otherwise."""
        with self._cond:
            p = self.pending_prompt
            if p is None or p["type"] != prompt_type:
                return False
            if p.get("agent_id") is not None and agent_id is not None \
                    and p["agent_id"] != agent_id:
                return False
            self._commands.append((prompt_type, agent_id, payload))
            self._cond.notify_all()
            return True

    def post_abandon(self):
        with self._cond:
            self._abandon = True
            self._cond.notify_all()

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "outcome": self.outcome,
                "pending_prompt": self.pending_prompt,
                "event_count": len(self.events),
            }

    def wait_events(self, since: int, timeout: float = 10.0) -> list:
        deadline_wait = timeout
        with self._cond:
            if len(self.events) <= since and self.outcome is None:
                self._cond.wait(timeout=deadline_wait)
            return list(self.events[since:])

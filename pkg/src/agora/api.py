"""HTTP/JSON control API: start runs, stream events, and feed human input
into interactive runs."""
from __future__ import annotations

import itertools
import threading

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .engine import Engine
from .errors import AgoraError, ParseError, UnknownPolicyTarget
from .harness import RunControl, RunRecord, run as run_scenario
from .scenario import parse_scenario


class RunRequest(BaseModel):
    scenario: dict
    mode: str = "scripted"  # "scripted" | "interactive"
    seed: int | None = None


class _LiveRun:
    def __init__(self, run_id: str, scenario, seed, control: RunControl):
        self.run_id = run_id
        self.scenario = scenario
        self.seed = seed
        self.control = control
        self.record: RunRecord | None = None
        self.thread: threading.Thread | None = None

    def has_contract(self) -> bool:
        return any(e.get("event") == "contract" for e in self.control.events)


def create_app() -> FastAPI:
    app = FastAPI(title="agora control API")
    runs: dict[str, _LiveRun] = {}
    counter = itertools.count(1)

    def get_run(run_id: str) -> _LiveRun:
        live = runs.get(run_id)
        if live is None:
            raise HTTPException(status_code=404, detail="unknown run")
        return live

    @app.post("/runs")
    def create_run(req: RunRequest):
        interactive = req.mode == "interactive"
        if req.mode not in ("scripted", "interactive"):
            raise HTTPException(status_code=400, detail="mode must be scripted or interactive")
        try:
            scenario = parse_scenario(req.scenario, allow_interactive=interactive)
        except (ParseError, UnknownPolicyTarget, AgoraError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        timeout = scenario.limits.interactive_timeout_ticks
        control = RunControl(timeout=float(timeout) if timeout else None)
        run_id = f"run-{next(counter)}"
        live = _LiveRun(run_id, scenario, req.seed, control)
        runs[run_id] = live

        def worker():
            try:
                live.record = run_scenario(scenario, seed=req.seed, control=control)
            except AgoraError as exc:  # surfaced, never a crash
                control.finish(f"Error: {exc}")

        live.thread = threading.Thread(target=worker, daemon=True)
        live.thread.start()
        return {"run_id": run_id}

    @app.get("/runs")
    def list_runs():
        return {
            "runs": [
                {"run_id": rid, "outcome": live.control.outcome}
                for rid, live in runs.items()
            ]
        }

    @app.get("/runs/{run_id}/state")
    def run_state(run_id: str):
        live = get_run(run_id)
        snap = live.control.snapshot()
        phases = [e["detail"]["phase"] for e in live.control.events
                  if e.get("event") == "phase"]
        snap["phase"] = phases[-1] if phases else None
        snap["run_id"] = run_id
        return snap

    @app.get("/runs/{run_id}/events")
    def run_events(run_id: str, since: int = Query(default=0), wait: float = Query(default=0.0)):
        live = get_run(run_id)
        if wait > 0:
            events = live.control.wait_events(since, timeout=min(wait, 25.0))
        else:
            with live.control._lock:
                events = list(live.control.events[since:])
        return {"since": since, "events": events,
                "next": since + len(events)}

    @app.post("/runs/{run_id}/consumer-input")
    def consumer_input(run_id: str, body: dict):
        live = get_run(run_id)
        if not isinstance(body, dict):
            raise HTTPException(status_code=400, detail="malformed body")
        if body.get("abandon"):
            if live.has_contract():
                return JSONResponse(status_code=409,
                                    content={"reason": "AbandonAfterContract"})
            live.control.post_abandon()
            return {"status": "accepted"}
        payload = {}
        if "attributes" in body:
            payload["attributes"] = body["attributes"]
        if "confirm" in body:
            payload["confirm"] = bool(body["confirm"])
        if not payload:
            raise HTTPException(status_code=400, detail="nothing to apply")
        ok = live.control.post_command("consumer-input", None, payload)
        if not ok:
            return JSONResponse(status_code=409,
                                content={"reason": "NoConsumerPromptPending"})
        return {"status": "accepted"}

    @app.post("/runs/{run_id}/expert-feedback")
    def expert_feedback(run_id: str, body: dict):
        live = get_run(run_id)
        expert = body.get("expert_id")
        verdict = body.get("verdict")
        if not expert or not verdict:
            raise HTTPException(status_code=400, detail="expert_id and verdict required")
        payload = {"verdict": verdict, "payload": body.get("payload", {})}
        ok = live.control.post_command("expert-feedback", expert, payload)
        if not ok:
            return JSONResponse(status_code=409,
                                content={"reason": "NoFeedbackPromptPending"})
        return {"status": "accepted"}

    @app.post("/runs/{run_id}/workflow-critique")
    def workflow_critique(run_id: str, body: dict):
        live = get_run(run_id)
        expert = body.get("expert_id")
        if not expert:
            raise HTTPException(status_code=400, detail="expert_id required")
        payload = {"edits": body.get("edits", [])}
        ok = live.control.post_command("workflow-critique", expert, payload)
        if not ok:
            return JSONResponse(status_code=409,
                                content={"reason": "NoCritiquePromptPending"})
        return {"status": "accepted"}

    @app.get("/runs/{run_id}/record")
    def run_record(run_id: str):
        live = get_run(run_id)
        if live.record is None:
            return JSONResponse(status_code=409, content={"reason": "RunNotFinished"})
        return JSONResponse(content={"jsonl": live.record.to_jsonl()})

    return app

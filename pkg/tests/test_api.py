"""HTTP control surface: run lifecycle, interactive prompts, abandonment."""
import json
import time

import pytest
from fastapi.testclient import TestClient

from agora.api import create_app
from agora.corpus import medical_scenario


@pytest.fixture
def client():
    return TestClient(create_app())


def wait_for(predicate, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        value = predicate()
        if value:
            return value
        time.sleep(0.01)
    raise AssertionError("condition not met in time")


def start_run(client, raw, mode="scripted"):
    resp = client.post("/runs", json={"scenario": raw, "mode": mode})
    assert resp.status_code == 200
    return resp.json()["run_id"]


def wait_outcome(client, run_id, timeout=15.0):
    return wait_for(
        lambda: client.get(f"/runs/{run_id}/state").json()["outcome"], timeout)


def interactive_scenario():
    raw = medical_scenario()
    raw["policies"]["patient-1"] = "interactive"
    return raw


class TestScripted:
    def test_full_run_and_record(self, client):
        run_id = start_run(client, medical_scenario())
        assert wait_outcome(client, run_id) == "Provisioned"
        record = client.get(f"/runs/{run_id}/record")
        assert record.status_code == 200
        lines = record.json()["jsonl"].strip().splitlines()
        header = json.loads(lines[0])
        assert header["scenario"] is not None
        assert json.loads(lines[-1])["event"] == "outcome"

    def test_events_pagination(self, client):
        run_id = start_run(client, medical_scenario())
        wait_outcome(client, run_id)
        first = client.get(f"/runs/{run_id}/events", params={"since": 0}).json()
        rest = client.get(f"/runs/{run_id}/events",
                          params={"since": first["next"]}).json()
        assert rest["events"] == []
        assert first["next"] > 10

    def test_bad_scenario_is_400(self, client):
        raw = dict(medical_scenario(), surprise=1)
        assert client.post("/runs", json={"scenario": raw}).status_code == 400

    def test_interactive_policy_needs_interactive_mode(self, client):
        resp = client.post("/runs", json={"scenario": interactive_scenario()})
        assert resp.status_code == 400

    def test_unknown_run_is_404(self, client):
        assert client.get("/runs/nope/state").status_code == 404

    def test_list_runs(self, client):
        run_id = start_run(client, medical_scenario())
        wait_outcome(client, run_id)
        listed = client.get("/runs").json()["runs"]
        assert {"run_id": run_id, "outcome": "Provisioned"} in listed


class TestInteractive:
    def drive_consumer(self, client, run_id, reply):
        """Answer every consumer prompt with `reply` until the run ends."""
        while True:
            state = client.get(f"/runs/{run_id}/state").json()
            if state["outcome"]:
                return state["outcome"]
            prompt = state["pending_prompt"]
            if prompt and prompt["type"] == "consumer-input":
                client.post(f"/runs/{run_id}/consumer-input", json=reply)
                time.sleep(0.02)
            else:
                time.sleep(0.01)

    def test_consumer_supplies_input_interactively(self, client):
        run_id = start_run(client, interactive_scenario(), mode="interactive")
        outcome = self.drive_consumer(
            client, run_id,
            {"attributes": {"age": "54", "location": "downtown"}, "confirm": True})
        assert outcome == "Provisioned"
        record = client.get(f"/runs/{run_id}/record").json()["jsonl"]
        assert '"outcome": "Provisioned"' in json.dumps(record) or "Provisioned" in record

    def test_consumer_input_without_prompt_is_409(self, client):
        run_id = start_run(client, medical_scenario())
        wait_outcome(client, run_id)
        resp = client.post(f"/runs/{run_id}/consumer-input",
                           json={"attributes": {"age": "54"}})
        assert resp.status_code == 409
        assert resp.json()["reason"] == "NoConsumerPromptPending"

    def test_abandon_before_contract_is_accepted(self, client):
        run_id = start_run(client, interactive_scenario(), mode="interactive")
        wait_for(lambda: client.get(f"/runs/{run_id}/state").json()["pending_prompt"])
        resp = client.post(f"/runs/{run_id}/consumer-input", json={"abandon": True})
        assert resp.status_code == 200
        assert wait_outcome(client, run_id) == "Abandoned"

    def test_abandon_after_contract_is_409(self, client):
        run_id = start_run(client, medical_scenario())
        wait_outcome(client, run_id)
        resp = client.post(f"/runs/{run_id}/consumer-input", json={"abandon": True})
        assert resp.status_code == 409
        assert resp.json()["reason"] == "AbandonAfterContract"

    def test_interactive_record_replays_scripted(self, client, tmp_path):
        from agora import harness
        raw = interactive_scenario()
        raw["policies"]["doc-expert"] = "interactive"
        run_id = start_run(client, raw, mode="interactive")
        deadline = time.time() + 15
        while time.time() < deadline:
            state = client.get(f"/runs/{run_id}/state").json()
            if state["outcome"]:
                break
            prompt = state["pending_prompt"]
            if prompt and prompt["type"] == "consumer-input":
                client.post(f"/runs/{run_id}/consumer-input",
                            json={"attributes": {"age": "54", "location": "x"},
                                  "confirm": True})
            elif prompt and prompt["type"] == "expert-feedback":
                client.post(f"/runs/{run_id}/expert-feedback",
                            json={"expert_id": prompt["agent_id"],
                                  "verdict": "Approve"})
            time.sleep(0.01)
        assert state["outcome"] == "Provisioned"
        path = tmp_path / "interactive.jsonl"
        path.write_text(client.get(f"/runs/{run_id}/record").json()["jsonl"])
        record = harness.load_record(path)
        # the embedded scenario is scripted: it replays without a human
        fresh = harness.replay(record)
        assert fresh.log_hash() == record.log_hash()

    def test_record_unavailable_while_waiting(self, client):
        run_id = start_run(client, interactive_scenario(), mode="interactive")
        wait_for(lambda: client.get(f"/runs/{run_id}/state").json()["pending_prompt"])
        resp = client.get(f"/runs/{run_id}/record")
        assert resp.status_code == 409
        # release the engine thread so the test client can shut down cleanly
        client.post(f"/runs/{run_id}/consumer-input", json={"abandon": True})
        wait_outcome(client, run_id)

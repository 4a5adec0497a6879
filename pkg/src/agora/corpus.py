"""Built-in scenario corpus.

The base scenario is the "patient needs a doctor" story: a cardiology
request that decomposes into diagnosis, an appointment, and a ride.  The
corpus varies interaction mode, mechanisms, network faults (latency,
jitter, partition windows), expert behavior, and failure injection.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path


def medical_ontology() -> dict:
    return {
        "tags": ["medical", "medical.cardiology", "medical.pulmonology", "legal"],
        "parent": {
            "medical.cardiology": "medical",
            "medical.pulmonology": "medical",
        },
        "keywords": {
            "medical.cardiology": ["chest pain", "palpitations", "shortness of breath"],
            "medical.pulmonology": ["cough", "wheezing", "shortness of breath"],
            "legal": ["contract dispute", "lawsuit"],
        },
        "required_attributes": {
            "medical.cardiology": ["location", "age"],
            "medical.pulmonology": ["location", "age"],
        },
        "services": {
            "medical.cardiology": [
                {"capabilities": ["diagnose.cardiology"], "mode": "negotiate"},
                {"capabilities": ["schedule.appointment"], "mode": "negotiate"},
                {"capabilities": ["transport.ride"], "mode": "negotiate"},
            ],
        },
        "templates": [],
    }


def medical_scenario(seed: int = 0) -> dict:
    """Cooperative medical base case: 3 tasks, 3 capable providers each
    covered, no faults."""
    return {
        "seed": seed,
        "ontology": medical_ontology(),
        "registrations": [
            {"agent_id": "patient-1", "kind": "Consumer", "environment": "identification"},
            {"agent_id": "doc-expert", "kind": "DomainExpert", "environment": "identification",
             "domains": ["medical.cardiology"]},
            {"agent_id": "gp-expert", "kind": "DomainExpert", "environment": "identification",
             "domains": ["medical"]},
            {"agent_id": "surgeon-expert", "kind": "SolutionExpert", "environment": "identification",
             "domains": ["medical.cardiology"]},
            {"agent_id": "clinic-1", "kind": "Provider", "environment": "provisioning",
             "capabilities": ["diagnose.cardiology"],
             "price_schedule": {"diagnose.cardiology": 50}},
            {"agent_id": "desk-1", "kind": "Provider", "environment": "provisioning",
             "capabilities": ["schedule.appointment"]},
            {"agent_id": "cab-1", "kind": "Provider", "environment": "provisioning",
             "capabilities": ["transport.ride"]},
            {"agent_id": "dominant-1", "kind": "Dominant", "environment": "provisioning"},
        ],
        "network": {"base_latency": 1, "jitter": 0, "drop_probability": 0},
        "request": {
            "consumer_id": "patient-1",
            "text": "chest pain and shortness of breath, need a doctor nearby",
            "attachments": {},
            "budget": 120,
            "interaction": "cooperative",
        },
        "policies": {
            "patient-1": {"role": "consumer",
                          "inputs": {"location": "allahabad", "age": "54"},
                          "confirm": True},
            "doc-expert": {"role": "expert", "verdicts": [
                {"verdict": "NeedMoreData", "attributes": ["age"]},
                {"verdict": "Approve"},
            ]},
            "gp-expert": {"role": "expert", "verdicts": [{"verdict": "Approve"}]},
            "surgeon-expert": {"role": "solution_expert", "critiques": []},
            "clinic-1": {"role": "provider", "cost": {"diagnose.cardiology": 40}},
            "desk-1": {"role": "provider", "cost": {"schedule.appointment": 5}},
            "cab-1": {"role": "provider", "cost": {"transport.ride": 10}},
        },
        "limits": {},
    }


def auction_scenario(seed: int = 0, failure: str = "none") -> dict:
    """Three competing ride providers bidding for the transport task.

    failure: "none" | "winner" (cheapest provider fails once) | "all".
    """
    s = medical_scenario(seed)
    s["ontology"]["services"]["medical.cardiology"][2]["mode"] = "auction"
    s["registrations"] = [r for r in s["registrations"] if r["agent_id"] != "cab-1"]
    del s["policies"]["cab-1"]
    for i, cost in [(1, 10), (2, 14), (3, 18)]:
        s["registrations"].append({
            "agent_id": f"cab-{i}", "kind": "Provider", "environment": "provisioning",
            "capabilities": ["transport.ride"],
        })
        fp = 0
        if failure == "all" or (failure == "winner" and i == 1):
            fp = 1
        s["policies"][f"cab-{i}"] = {
            "role": "provider", "cost": {"transport.ride": cost},
            "opening_markup": 0.25, "failure_probability": fp,
        }
    return s


def partition_scenario(seed: int = 0) -> dict:
    """Partition window separating the experts for ticks 2..30, healed after."""
    s = medical_scenario(seed)
    s["network"] = {
        "base_latency": 1, "jitter": 0, "drop_probability": 0,
        "changes": [
            {"at": 2, "partitions": [["doc-expert", "gp-expert"]]},
            {"at": 30, "partitions": []},
        ],
    }
    return s


def competitive_scenario(seed: int = 0) -> dict:
    s = medical_scenario(seed)
    s["request"]["interaction"] = "competitive"
    return s


def reject_scenario(seed: int = 0) -> dict:
    s = medical_scenario(seed)
    s["policies"]["doc-expert"] = {"role": "expert",
                                   "verdicts": [{"verdict": "Reject", "reason": "not medical"}]}
    s["policies"]["gp-expert"] = {"role": "expert",
                                  "verdicts": [{"verdict": "Reject", "reason": "not medical"}]}
    return s


def abandon_scenario(seed: int = 0, after_events: int = 6) -> dict:
    s = medical_scenario(seed)
    s["policies"]["patient-1"]["abandon_after_events"] = after_events
    return s


def refer_scenario(seed: int = 0) -> dict:
    """Expert refers the pulmonology domain; no service mapping exists for it,
    but cardiology still identifies and the run completes."""
    s = medical_scenario(seed)
    s["policies"]["gp-expert"] = {"role": "expert", "verdicts": [
        {"verdict": "ReferDomain", "tags": ["medical.cardiology"]},
        {"verdict": "Approve"},
    ]}
    return s


def template_scenario(seed: int = 0) -> dict:
    """Combined diagnose+schedule service split by a decomposition template."""
    s = medical_scenario(seed)
    s["ontology"]["services"]["medical.cardiology"] = [
        {"capabilities": ["diagnose.cardiology", "schedule.appointment"],
         "mode": "negotiate"},
        {"capabilities": ["transport.ride"], "mode": "negotiate"},
    ]
    s["ontology"]["templates"] = [{
        "pattern": ["diagnose.cardiology", "schedule.appointment"],
        "parts": [
            {"capabilities": ["diagnose.cardiology"], "after": []},
            {"capabilities": ["schedule.appointment"], "after": [0]},
        ],
        "budget_split": ["0.7", "0.3"],
    }]
    return s


def critique_scenario(seed: int = 0) -> dict:
    """Solution expert reorders the ride to depend on the appointment."""
    s = medical_scenario(seed)
    s["policies"]["surgeon-expert"] = {"role": "solution_expert", "critiques": [
        [{"op": "Reorder", "task_id": "t3", "depends_on": ["t2"]}],
    ]}
    return s


def slow_network_scenario(seed: int = 0) -> dict:
    s = medical_scenario(seed)
    s["network"] = {"base_latency": 3, "jitter": 2, "drop_probability": 0}
    return s


def corpus() -> dict:
    """The 20-scenario determinism corpus, name -> scenario dict."""
    out = {
        "medical_cooperative": medical_scenario(),
        "medical_competitive": competitive_scenario(),
        "medical_auction": auction_scenario(),
        "medical_auction_winner_fails": auction_scenario(failure="winner"),
        "medical_auction_all_fail": auction_scenario(failure="all"),
        "medical_partition": partition_scenario(),
        "medical_reject": reject_scenario(),
        "medical_abandon": abandon_scenario(),
        "medical_refer": refer_scenario(),
        "medical_template": template_scenario(),
        "medical_critique": critique_scenario(),
        "medical_slow_network": slow_network_scenario(),
    }
    # jittered / partition variants to round the corpus out to 20
    v = competitive_scenario()
    v["network"] = {"base_latency": 2, "jitter": 3, "drop_probability": 0}
    out["competitive_jitter"] = v
    v = auction_scenario()
    v["network"] = {"base_latency": 1, "jitter": 2, "drop_probability": 0}
    out["auction_jitter"] = v
    v = partition_scenario()
    v["network"]["changes"] = [
        {"at": 1, "partitions": [["patient-1"]]},
        {"at": 40, "partitions": []},
    ]
    out["partition_consumer"] = v
    v = partition_scenario()
    v["request"]["interaction"] = "competitive"
    out["partition_competitive"] = v
    v = template_scenario()
    v["request"]["interaction"] = "competitive"
    out["template_competitive"] = v
    v = medical_scenario()
    v["request"]["attachments"] = {"age": "54", "location": "allahabad"}
    out["medical_attached"] = v
    v = abandon_scenario(after_events=3)
    out["abandon_early"] = v
    v = critique_scenario()
    v["policies"]["surgeon-expert"]["critiques"] = [
        [{"op": "Rebudget", "task_id": "t1", "budget": 60},
         {"op": "Rebudget", "task_id": "t2", "budget": 20}],
    ]
    out["critique_rebudget"] = v
    assert len(out) == 20
    return out


def write_corpus(directory) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, scenario in corpus().items():
        path = directory / f"{name}.json"
        path.write_text(json.dumps(scenario, indent=2) + "\n", encoding="utf-8")
        paths.append(path)
    return paths

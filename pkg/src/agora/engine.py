"""Deterministic run engine: drives identification, planning, provisioning
and execution over the simulated network, emitting an append-only event log.

Every stochastic decision is a keyed draw from the scenario seed, every
iteration order is sorted, and scripted policies respond at delivery time,
so a (scenario digest, seed) pair always yields the same log.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from fractions import Fraction

from . import identification as ident
from . import planner
from . import provisioning as prov
from .errors import (
    InvalidEdit,
    NoCapableProvider,
    NoServiceMapping,
    UnmappedTask,
)
from .messaging import Envelope, Router
from .registrar import Registrar, Registration
from .scenario import (
    ConsumerPolicy,
    ExpertPolicy,
    Interactive,
    Scenario,
    SolutionExpertPolicy,
)
from .util import frac_str

ORCHESTRATOR = "orchestrator"
REGISTRAR_AGENT = "registrar"


class _Terminal(Exception):
    def __init__(self, outcome: str, **detail):
        super().__init__(outcome)
        self.outcome = outcome
        self.detail = detail


class Engine:
    def __init__(self, scenario: Scenario, seed: int = None, control=None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.control = control  # RunControl for interactive/API runs, else None
        self.events = []
        self.limits = scenario.limits
        self.ontology = scenario.ontology
        self.registrar = Registrar()
        self._seq = {}  # (sender, conversation) -> last seq
        self.contracts = {}  # task_id -> Contract (active/completed)
        self.engaged = set()  # agents contacted for this request
        self._abandon_requested = False
        self._abandon_resolved = False
        self.phase = None
        # interactive-input capture, used to rebuild a scripted scenario so
        # interactive records replay without a human
        self._captured_consumer = []
        self._captured_feedback = {}  # expert -> list of verdict specs
        self._captured_critiques = {}  # expert -> list of edit lists
        self._consumer_prompt_count = 0
        self._abandon_capture_at = None

        next_at = len(scenario.registrations)
        ids = {r.agent_id for r in scenario.registrations}
        for reg in scenario.registrations:
            self.registrar.register(reg)
        if ORCHESTRATOR not in ids:
            self.registrar.register(Registration(
                agent_id=ORCHESTRATOR, kind="Orchestrator",
                environment="identification", registered_at=next_at))
            next_at += 1
        if REGISTRAR_AGENT not in ids:
            self.registrar.register(Registration(
                agent_id=REGISTRAR_AGENT, kind="Orchestrator",
                environment="system", registered_at=next_at))
            next_at += 1
        self.dominant = next(
            (r.agent_id for r in scenario.registrations if r.kind == "Dominant"),
            None,
        )
        if self.dominant is None:
            self.dominant = "dominant"
            if "dominant" not in ids:
                self.registrar.register(Registration(
                    agent_id="dominant", kind="Dominant",
                    environment="provisioning", registered_at=next_at))
                next_at += 1

        self.router = Router(
            self.registrar, seed=self.seed, state=scenario.network,
            registrar_agent_id=REGISTRAR_AGENT, on_event=self._net_event,
        )
        for at, state in scenario.network_changes:
            self.router.set_network(state, at)

        self.inbox = []  # envelopes delivered to the orchestrator
        self.profiles = scenario.profiles
        self.descriptors = None
        self.workflow = None
        self.utilities = None
        self.sem = None

    # -- logging -------------------------------------------------------------

    def log(self, event: str, envelope: Envelope = None, tick: int = None, **detail):
        record = {"tick": self.router.now if tick is None else tick, "event": event}
        if envelope is not None:
            record["envelope"] = envelope.to_json_dict()
        if detail:
            record["detail"] = detail
        self.events.append(record)
        if self.control is not None:
            self.control.emit(record)
        policy = self._consumer_policy()
        if (policy is not None and policy.abandon_after_events is not None
                and len(self.events) >= policy.abandon_after_events):
            self._abandon_requested = True

    def _net_event(self, tick, event, envelope=None):
        self.log(event, envelope=envelope, tick=tick)

    # -- messaging helpers ---------------------------------------------------

    def _send(self, sender: str, recipient: str, msg_type: str, body: dict,
              conversation: str):
        key = (sender, conversation)
        seq = self._seq.get(key, 0) + 1
        self._seq[key] = seq
        env = Envelope(
            conversation_id=conversation,
            sender=sender,
            recipient=recipient,
            environment=self.registrar.environment_of(sender),
            msg_type=msg_type,
            seq=seq,
            body=body,
        )
        receipt = self.router.send(env, self.router.now)
        if receipt.status == "Rejected":
            self.log("send_rejected", envelope=env, reason=receipt.reason)
        return receipt

    def _pump(self, deadline: int, want=None):
        """Advance the network until `want(inbox)` is satisfied, the deadline
        passes, or no more traffic can move."""
        while want is None or not want():
            next_tick = self.router.next_event_tick()
            if next_tick is None or next_tick > deadline:
                break
            for tick, env in self.router.advance(next_tick):
                self._dispatch(tick, env)
        if want is None:
            # flush whatever is scheduled inside the window
            while True:
                next_tick = self.router.next_event_tick()
                if next_tick is None or next_tick > deadline:
                    break
                for tick, env in self.router.advance(next_tick):
                    self._dispatch(tick, env)

    def _collect(self, conversations, msg_type: str, count: int, timeout: int):
        deadline = self.router.now + timeout
        conversations = set(conversations)

        def have():
            return len([
                m for m in self.inbox
                if m.conversation_id in conversations and m.msg_type == msg_type
            ]) >= count

        self._pump(deadline, want=have)
        got = [m for m in self.inbox
               if m.conversation_id in conversations and m.msg_type == msg_type]
        self.inbox = [m for m in self.inbox if m not in got]
        return got

    # -- scripted/interactive agent behavior ----------------------------------

    def _dispatch(self, tick: int, env: Envelope):
        if env.recipient == ORCHESTRATOR:
            self.inbox.append(env)
            return
        if env.msg_type == "Request":
            kind = env.body.get("kind")
            if kind == "feedback_request":
                self._answer_feedback(env)
            elif kind == "info_request":
                self._answer_consumer(env)
            elif kind == "critique_request":
                self._answer_critique(env)
            elif kind in ("task_brief", "call_for_bids"):
                self._answer_provider(env)
        elif env.msg_type == "Award":
            self._send(env.recipient, env.sender, "Ack",
                       {"of": "Award", "task_id": env.body["task_id"]},
                       env.conversation_id)
        # Cancel / Status deliveries need no reply

    def _policy(self, agent_id):
        return self.scenario.policies.get(agent_id)

    def _consumer_policy(self):
        pol = self._policy(self.scenario.request.consumer_id)
        return pol if isinstance(pol, ConsumerPolicy) else None

    def _answer_feedback(self, env: Envelope):
        expert = env.recipient
        policy = self._policy(expert)
        round_index = env.body.get("round", 0)
        if isinstance(policy, Interactive):
            command = self.control.await_input(
                {"type": "expert-feedback", "agent_id": expert,
                 "round": round_index})
            spec = {"verdict": command.get("verdict", "Approve")}
            payload = command.get("payload", {})
            spec.update(payload)
        elif isinstance(policy, ExpertPolicy):
            spec = policy.verdict_for(round_index)
        else:
            spec = {"verdict": "Approve"}
        body = {"verdict": spec.get("verdict", "Approve")}
        for key in ("attributes", "tags", "reason", "comment"):
            if key in spec:
                body[key] = spec[key]
        if isinstance(policy, Interactive):
            self._captured_feedback.setdefault(expert, []).append(dict(body))
        self._send(expert, ORCHESTRATOR, "Feedback", body, env.conversation_id)

    def _answer_consumer(self, env: Envelope):
        consumer = env.recipient
        policy = self._policy(consumer)
        asked = env.body.get("missing", [])
        prompt_index = self._consumer_prompt_count
        self._consumer_prompt_count += 1
        if isinstance(policy, Interactive):
            command = self.control.await_input(
                {"type": "consumer-input", "missing": asked})
            if command.get("abandon"):
                self._abandon_requested = True
                if self._abandon_capture_at is None:
                    self._abandon_capture_at = len(self.events)
                supplied, confirm = {}, False
            else:
                supplied = dict(command.get("attributes", {}))
                confirm = bool(command.get("confirm", False))
            self._captured_consumer.append(
                {"attributes": dict(supplied), "confirm": confirm})
        elif isinstance(policy, ConsumerPolicy):
            supplied, confirm = policy.response_for(prompt_index, asked)
        else:
            supplied, confirm = {}, True
        self._send(consumer, ORCHESTRATOR, "Feedback",
                   {"verdict": "ConsumerInput", "attributes": supplied,
                    "confirm": confirm},
                   env.conversation_id)

    def _answer_critique(self, env: Envelope):
        expert = env.recipient
        policy = self._policy(expert)
        round_index = env.body.get("round", 0)
        if isinstance(policy, Interactive):
            command = self.control.await_input(
                {"type": "workflow-critique", "agent_id": expert,
                 "round": round_index})
            edits = command.get("edits", [])
            self._captured_critiques.setdefault(expert, []).append(list(edits))
        elif isinstance(policy, SolutionExpertPolicy):
            edits = policy.edits_for(round_index)
        else:
            edits = []
        self._send(expert, ORCHESTRATOR, "Feedback",
                   {"verdict": "Critique", "edits": edits}, env.conversation_id)

    def _answer_provider(self, env: Envelope):
        provider = env.recipient
        kind = env.body.get("kind")
        if kind == "task_brief":
            self._send(provider, ORCHESTRATOR, "Ack",
                       {"of": "task_brief", "task_id": env.body.get("task_id")},
                       env.conversation_id)
        elif kind == "call_for_bids":
            amount = env.body.get("expected_amount")
            self._send(provider, ORCHESTRATOR, "Bid",
                       {"task_id": env.body.get("task_id"), "amount": amount},
                       env.conversation_id)

    # -- abandonment ---------------------------------------------------------

    def request_abandon(self):
        self._abandon_requested = True

    def _checkpoint(self):
        if self.control is not None and self.control.poll_abandon():
            self._abandon_requested = True
            if self._abandon_capture_at is None:
                self._abandon_capture_at = len(self.events)
        if not self._abandon_requested or self._abandon_resolved:
            return
        if self.contracts:
            self._abandon_resolved = True
            self.log("abandon_rejected", reason="AbandonAfterContract")
            if self.control is not None:
                self.control.abandon_rejected("AbandonAfterContract")
            return
        # cancel every engaged conversation, deliver the cancels, then stop
        self._abandon_resolved = True
        for agent in sorted(self.engaged):
            if self.registrar.is_registered(agent):
                self._send(ORCHESTRATOR, agent, "Cancel",
                           {"reason": "ConsumerAbandoned"},
                           f"cancel-{self.scenario.request.consumer_id}-{agent}")
        self._pump(self.router.now + self.limits.response_timeout_ticks)
        if self.sem is not None:
            self.sem = ident.abandon(self.sem)
        raise _Terminal("Abandoned")

    # -- phases --------------------------------------------------------------

    def run(self) -> str:
        try:
            self._phase_identification()
            self._phase_planning()
            self._phase_provisioning()
            self._phase_execution()
            raise _Terminal("Provisioned")
        except _Terminal as term:
            detail = dict(term.detail)
            completed = [c for c in self.contracts.values() if c.status == "Completed"]
            detail["outcome"] = term.outcome
            detail["contracts"] = len(completed)
            detail["total_price"] = frac_str(
                sum((c.price for c in completed), Fraction(0)))
            if self.utilities is not None:
                detail["social_welfare"] = frac_str(self.utilities.social_welfare)
            else:
                detail["social_welfare"] = "0"
            if self.workflow is not None:
                detail["tasks"] = len(self.workflow.tasks)
            self.log("outcome", **detail)
            if self.control is not None:
                self.control.finish(term.outcome)
            return term.outcome

    def replayable_raw(self) -> dict:
        """The scenario with every interactive policy replaced by a scripted
        one reproducing the captured human input, so the record replays
        headless.  Unchanged for fully scripted runs."""
        if not any(isinstance(p, Interactive)
                   for p in self.scenario.policies.values()):
            return self.scenario.raw
        raw = copy.deepcopy(self.scenario.raw)
        kinds = {r.agent_id: r.kind for r in self.scenario.registrations}
        for agent_id, pol in self.scenario.policies.items():
            if not isinstance(pol, Interactive):
                continue
            kind = kinds.get(agent_id)
            if kind == "Consumer":
                scripted = {"role": "consumer", "inputs": {}, "confirm": False,
                            "responses": list(self._captured_consumer)}
                if self._abandon_capture_at is not None:
                    scripted["abandon_after_events"] = self._abandon_capture_at
            elif kind == "SolutionExpert":
                scripted = {"role": "solution_expert",
                            "critiques": self._captured_critiques.get(agent_id, [])}
            else:
                scripted = {"role": "expert",
                            "verdicts": self._captured_feedback.get(agent_id, [])}
            raw["policies"][agent_id] = scripted
        return raw

    def _notify_consumer(self, state: str):
        consumer = self.scenario.request.consumer_id
        if self.registrar.is_registered(consumer):
            self._send(ORCHESTRATOR, consumer, "Status", {"state": state},
                       f"notify-{consumer}")
            self._pump(self.router.now + self.limits.response_timeout_ticks)

    def _phase_identification(self):
        self.phase = "identification"
        self.log("phase", phase="identification")
        req = self.scenario.request
        theta = self.limits.theta
        sem = ident.parse_request(req.text, req.attachments, self.ontology,
                                  theta, request_id=f"req-{req.consumer_id}")
        self.sem = sem
        self.log("parsed", semantics=sem.to_json_dict())
        rounds = 0
        while sem.status not in ident.TERMINAL:
            self._checkpoint()
            experts = []
            if sem.tags:
                rankings = self.registrar.find_experts(
                    set(sem.tags), self.ontology, kind="DomainExpert")
                experts = [r.agent_id for r in rankings]
            if not experts:
                sem = copy.deepcopy(sem)
                sem.status = "Unresolvable"
                self.sem = sem
                self.log("no_experts")
                self._notify_consumer("Unresolvable")
                raise _Terminal("Unresolvable", reason="NoExpertsFound")
            if sem.status == "AwaitingConsumer":
                sem.status = "UnderReview"
            sem, convs = ident.solicit_feedback(sem, experts)
            self.sem = sem
            rounds += 1
            self.log("solicit", round=sem.iteration, experts=experts)
            self.engaged.update(experts)
            for expert, conv in convs:
                self._send(ORCHESTRATOR, expert, "Request",
                           {"kind": "feedback_request", "round": sem.iteration,
                            "semantics": sem.to_json_dict()},
                           conv)
            responses = self._collect([c for _, c in convs], "Feedback",
                                      len(convs), self.limits.response_timeout_ticks)
            feedbacks = []
            for resp in sorted(responses, key=lambda m: m.sender):
                body = resp.body
                feedbacks.append(ident.ExpertFeedback(
                    expert_id=resp.sender,
                    verdict=body.get("verdict", "Approve"),
                    attributes=frozenset(body.get("attributes", [])),
                    tags=frozenset(body.get("tags", [])),
                    reason=body.get("reason", ""),
                    comment=body.get("comment", ""),
                ))
            asked = sorted(
                set(sem.missing_info)
                | set().union(*(set(fb.attributes) for fb in feedbacks))
                if feedbacks else set(sem.missing_info)
            )
            conv_c = f"consumer-{sem.request_id}-r{sem.iteration}"
            self.engaged.add(req.consumer_id)
            self._send(ORCHESTRATOR, req.consumer_id, "Request",
                       {"kind": "info_request", "missing": asked}, conv_c)
            replies = self._collect([conv_c], "Feedback", 1,
                                    self.limits.response_timeout_ticks)
            consumer_input, confirmed = {}, False
            if replies:
                consumer_input = dict(replies[0].body.get("attributes", {}))
                confirmed = bool(replies[0].body.get("confirm", False))
            self._checkpoint()
            sem = ident.apply_feedback(sem, feedbacks, consumer_input,
                                       self.ontology, theta)
            sem = ident.step_identification(
                sem, feedbacks, confirmed, self.limits.r_max)
            self.sem = sem
            self.log("refined", iteration=sem.iteration, status=sem.status,
                     semantics=sem.to_json_dict())
        if sem.status == "Unresolvable":
            self._notify_consumer("Unresolvable")
            raise _Terminal("Unresolvable")
        if sem.status == "Abandoned":
            raise _Terminal("Abandoned")
        self._notify_consumer("Identified")
        self.descriptors = ident.emit_descriptors(sem, self.ontology, theta)
        self.log("descriptors", descriptors=self.descriptors.to_json_dict())

    def _phase_planning(self):
        self.phase = "planning"
        self.log("phase", phase="planning")
        req = self.scenario.request
        theta = self.limits.theta
        final_tags = self.sem.final_tags(theta)
        try:
            workflow = planner.draft_workflow(
                self.descriptors, self.ontology, req.budget)
        except NoServiceMapping as exc:
            raise _Terminal("WorkflowFailed", reason=f"NoServiceMapping: {exc}")
        self.log("workflow_drafted", workflow=workflow.to_json_dict())
        experts = []
        if final_tags:
            rankings = self.registrar.find_experts(
                final_tags, self.ontology, kind="SolutionExpert")
            experts = [r.agent_id for r in rankings]
        for round_index in range(self.limits.critique_rounds):
            if not experts:
                break
            self._checkpoint()
            convs = []
            self.engaged.update(experts)
            for expert in experts:
                conv = f"plan-{self.sem.request_id}-r{round_index}-{expert}"
                convs.append(conv)
                self._send(ORCHESTRATOR, expert, "Request",
                           {"kind": "critique_request", "round": round_index,
                            "workflow": workflow.to_json_dict()},
                           conv)
            responses = self._collect(convs, "Feedback", len(convs),
                                      self.limits.response_timeout_ticks)
            edits = []
            for resp in sorted(responses, key=lambda m: m.sender):
                for edit in resp.body.get("edits", []):
                    params = {k: v for k, v in edit.items() if k != "op"}
                    edits.append(planner.ExpertEdit.make(edit["op"], **params))
            self.log("critique_round", round=round_index, edits=len(edits))
            if not edits:
                break
            try:
                workflow = planner.apply_critique(
                    workflow, edits, req.budget, self.ontology.templates)
                self.log("workflow_revised", workflow=workflow.to_json_dict())
            except InvalidEdit as exc:
                self.log("edit_rejected", reason=str(exc))
        try:
            workflow = planner.decompose_workflow(
                workflow, self.ontology.templates, self.registrar)
        except NoCapableProvider as exc:
            raise _Terminal("WorkflowFailed", reason=f"NoCapableProvider: {exc}")
        universe = self.ontology.capability_universe()
        for reg in self.registrar.agents():
            universe |= set(reg.capabilities)
        violations = planner.validate_workflow(workflow, req.budget, universe)
        if violations:
            self.log("workflow_invalid", violations=violations)
            raise _Terminal("WorkflowFailed", reason="; ".join(violations))
        self.workflow = workflow
        self.log("workflow_final", workflow=workflow.to_json_dict())

    def _mechanism(self, task, candidates, label: str):
        if task.mode == "auction":
            return prov.run_auction(
                task, candidates, self.profiles, self.seed, label,
                now=self.router.now, contract_id=f"c-{label}")
        mode = ("Cooperative" if self.scenario.request.interaction == "cooperative"
                else "Competitive")
        return prov.negotiate(
            task, candidates, self.profiles, mode, self.limits.K,
            now=self.router.now, contract_id=f"c-{label}")

    def _phase_provisioning(self):
        self.phase = "provisioning"
        self.log("phase", phase="provisioning")
        try:
            self.candidates_map = prov.map_providers(self.workflow, self.registrar)
        except UnmappedTask as exc:
            raise _Terminal("WorkflowFailed", reason=f"UnmappedTask: {exc}")
        for tid in self.workflow.topo_order():
            self._checkpoint()
            task = self.workflow.tasks[tid]
            candidates = self.candidates_map[tid]
            self.engaged.update(candidates)
            convs = {}
            for cand in candidates:
                token = self.registrar.introduce(ORCHESTRATOR, cand)
                convs[cand] = token.conversation_id
                self.log("introduce", token=token.token_id, provider=cand,
                         conversation=token.conversation_id)
                self._send(ORCHESTRATOR, cand, "Request",
                           {"kind": "task_brief", "task_id": tid},
                           token.conversation_id)
            self._collect(list(convs.values()), "Ack", len(candidates),
                          self.limits.response_timeout_ticks)
            result, events = self._mechanism(task, candidates, tid)
            if task.mode == "auction":
                # sealed bids travel as envelopes so the wire trace is honest
                amounts = {e["provider"]: e["amount"] for e in events
                           if e["event"] == "bid"}
                for cand in candidates:
                    self._send(ORCHESTRATOR, cand, "Request",
                               {"kind": "call_for_bids", "task_id": tid,
                                "expected_amount": amounts[cand]},
                               convs[cand])
                self._collect(list(convs.values()), "Bid", len(candidates),
                              self.limits.response_timeout_ticks)
            for event in events:
                name = event.pop("event")
                self.log(name, **event)
            if isinstance(result, (prov.NoAgreement, prov.NoWinner)):
                raise _Terminal("WorkflowFailed", reason=result.reason,
                                blocking_task=tid)
            result.formed_at = self.router.now
            self.contracts[tid] = result
            self._send(ORCHESTRATOR, result.provider, "Award",
                       {"task_id": tid, "price": frac_str(result.price)},
                       convs[result.provider])
            self._collect([convs[result.provider]], "Ack", 1,
                          self.limits.response_timeout_ticks)
            self.log("award", task_id=tid, provider=result.provider,
                     price=frac_str(result.price))
            self.log("contract", contract=result.to_json_dict())

    def _phase_execution(self):
        self.phase = "execution"
        self.log("phase", phase="execution")

        def rerun(task, remaining, attempt):
            return self._mechanism(task, remaining, f"{task.task_id}-re{attempt}")

        report = prov.execute(
            self.workflow, {tid: c for tid, c in self.contracts.items()},
            self.candidates_map, self.profiles, self.dominant, self.seed,
            rerun, now=self.router.now, registrar=self.registrar,
        )
        for event in report.events:
            name = dict(event)
            kind = name.pop("event")
            self.log(kind, **name)
        for contract in report.contracts:
            self.contracts[contract.task_id] = contract
        if report.status == "WorkflowFailed":
            raise _Terminal("WorkflowFailed", blocking_task=report.blocking_task,
                            reassignments=report.reassignments)
        self.utilities = prov.compute_utilities(
            report.contracts, self.profiles, self.workflow.tasks,
            self.scenario.request.budget)
        self.log("utilities", report=self.utilities.to_json_dict(),
                 reassignments=report.reassignments)

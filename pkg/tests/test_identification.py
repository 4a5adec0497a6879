"""Query identification: parsing, refinement loop, termination, descriptors."""
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agora import identification as ident
from agora.errors import EmptyRequest, NotIdentified, UnknownAttribute
from agora.ontology import ontology_from_json

THETA = Fraction(1, 2)

CARDIO_TEXT = "chest pain and shortness of breath, need a doctor nearby"


def brute_force_parse(text, ontology):
    """Independent phrase-matching oracle: literal substring counting."""
    lowered = text.lower()
    out = {}
    for tag, phrases in ontology.keywords.items():
        hits = [p for p in phrases if p in lowered]
        if hits:
            out[tag] = Fraction(len(hits), len(phrases))
    return out


class TestParse:
    def test_cardiology_confidence_two_thirds(self, ontology):
        sem = ident.parse_request(CARDIO_TEXT, {}, ontology, THETA)
        assert sem.tags["medical.cardiology"] == Fraction(2, 3)
        assert sem.missing_info == {"location", "age"}
        assert sem.status == "Parsed"
        assert sem.iteration == 0

    def test_blank_request(self, ontology):
        with pytest.raises(EmptyRequest):
            ident.parse_request("   ", {}, ontology, THETA)

    def test_no_keywords_matched(self, ontology):
        sem = ident.parse_request("hello world", {}, ontology, THETA)
        assert sem.tags == {}
        assert sem.missing_info == set()
        assert sem.status == "Parsed"

    def test_attachments_seed_attributes(self, ontology):
        sem = ident.parse_request(CARDIO_TEXT, {"age": "54"}, ontology, THETA)
        assert sem.attributes == {"age": "54"}
        assert sem.missing_info == {"location"}

    def test_deterministic(self, ontology):
        a = ident.parse_request(CARDIO_TEXT, {}, ontology, THETA)
        b = ident.parse_request(CARDIO_TEXT, {}, ontology, THETA)
        assert a == b

    def test_confidences_in_unit_interval_match_oracle(self, ontology):
        rng = random.Random(7)
        words = ["chest", "pain", "cough", "shortness", "of", "breath",
                 "lawsuit", "palpitations", "hello", "wheezing", "contract",
                 "dispute"]
        for _ in range(200):
            text = " ".join(rng.choices(words, k=rng.randint(1, 12)))
            try:
                sem = ident.parse_request(text, {}, ontology, THETA)
            except EmptyRequest:
                continue
            assert sem.tags == brute_force_parse(text, ontology)
            for conf in sem.tags.values():
                assert 0 < conf <= 1


class TestSolicit:
    def test_one_conversation_per_expert(self, ontology):
        sem = ident.parse_request(CARDIO_TEXT, {}, ontology, THETA)
        sem, convs = ident.solicit_feedback(sem, ["e1", "e2"])
        assert sem.status == "UnderReview"
        assert len(convs) == 2
        prefix = convs[0][1].rsplit("-", 1)[0]
        assert all(conv.startswith(prefix) for _, conv in convs)

    def test_no_experts(self, ontology):
        sem = ident.parse_request(CARDIO_TEXT, {}, ontology, THETA)
        with pytest.raises(ident.NoExpertsFound):
            ident.solicit_feedback(sem, [])

    def test_terminal_status_rejected(self, ontology):
        sem = ident.parse_request(CARDIO_TEXT, {}, ontology, THETA)
        sem.status = "Identified"
        with pytest.raises(ValueError):
            ident.solicit_feedback(sem, ["e1"])


class TestApplyFeedback:
    def _under_review(self, ontology, attachments=None):
        sem = ident.parse_request(CARDIO_TEXT, attachments or {}, ontology, THETA)
        sem, _ = ident.solicit_feedback(sem, ["e1"])
        return sem

    def test_consumer_input_moves_missing_to_attributes(self, ontology):
        sem = self._under_review(ontology)
        fb = ident.ExpertFeedback("e1", "NeedMoreData", attributes=frozenset({"age"}))
        out = ident.apply_feedback(sem, [fb], {"age": "54"}, ontology, THETA)
        assert out.attributes["age"] == "54"
        assert "age" not in out.missing_info
        assert out.iteration == sem.iteration + 1

    def test_refer_domain_adds_tag_at_theta(self, ontology):
        sem = self._under_review(ontology)
        fb = ident.ExpertFeedback("e1", "ReferDomain",
                                  tags=frozenset({"medical.pulmonology"}))
        out = ident.apply_feedback(sem, [fb], {}, ontology, THETA)
        assert out.tags["medical.pulmonology"] == THETA
        assert "medical.pulmonology" in out.expert_tags

    def test_unknown_attribute_rejected(self, ontology):
        sem = self._under_review(ontology)
        with pytest.raises(UnknownAttribute):
            ident.apply_feedback(sem, [], {"shoe_size": "42"}, ontology, THETA)

    def test_monotone_information(self, ontology):
        sem = self._under_review(ontology)
        fb = ident.ExpertFeedback("e1", "NeedMoreData", attributes=frozenset({"age"}))
        out = ident.apply_feedback(sem, [fb], {"age": "54", "location": "x"},
                                   ontology, THETA)
        assert set(sem.attributes) <= set(out.attributes)
        assert not (out.missing_info & set(out.attributes))


class TestStep:
    def _reviewed(self, ontology, supply_all=True):
        sem = ident.parse_request(CARDIO_TEXT, {}, ontology, THETA)
        sem, _ = ident.solicit_feedback(sem, ["e1", "e2"])
        supplied = {"age": "54", "location": "x"} if supply_all else {}
        return ident.apply_feedback(sem, [], supplied, ontology, THETA)

    def test_unanimous_approve_with_confirmation(self, ontology):
        sem = self._reviewed(ontology)
        fbs = [ident.ExpertFeedback("e1", "Approve"),
               ident.ExpertFeedback("e2", "Approve")]
        out = ident.step_identification(sem, fbs, True, r_max=8)
        assert out.status == "Identified"

    def test_unanimous_reject(self, ontology):
        sem = self._reviewed(ontology)
        fbs = [ident.ExpertFeedback("e1", "Reject", reason="no"),
               ident.ExpertFeedback("e2", "Reject", reason="no")]
        out = ident.step_identification(sem, fbs, True, r_max=8)
        assert out.status == "Unresolvable"

    def test_mixed_feedback_awaits_consumer(self, ontology):
        sem = self._reviewed(ontology, supply_all=False)
        fbs = [ident.ExpertFeedback("e1", "Approve"),
               ident.ExpertFeedback("e2", "NeedMoreData",
                                    attributes=frozenset({"age"}))]
        sem.missing_info.add("age")
        out = ident.step_identification(sem, fbs, True, r_max=8)
        assert out.status == "AwaitingConsumer"

    def test_round_budget_exhaustion(self, ontology):
        sem = self._reviewed(ontology, supply_all=False)
        sem.iteration = 8
        out = ident.step_identification(
            sem, [ident.ExpertFeedback("e1", "Approve")], False, r_max=8)
        assert out.status == "Unresolvable"


class TestDescriptors:
    def _identified(self, ontology):
        sem = ident.parse_request(CARDIO_TEXT, {"age": "54", "location": "x"},
                                  ontology, THETA)
        sem.status = "Identified"
        return sem

    def test_vocabulary_is_ancestor_closed(self, ontology):
        d = ident.emit_descriptors(self._identified(ontology), ontology, THETA)
        assert d.vocabulary["tags"] == ["medical", "medical.cardiology"]

    def test_not_identified(self, ontology):
        sem = ident.parse_request(CARDIO_TEXT, {}, ontology, THETA)
        sem.status = "Unresolvable"
        with pytest.raises(NotIdentified):
            ident.emit_descriptors(sem, ontology, THETA)

    def test_byte_identical_across_runs(self, ontology):
        sem = self._identified(ontology)
        a = ident.emit_descriptors(sem, ontology, THETA).to_json_dict()
        b = ident.emit_descriptors(sem, ontology, THETA).to_json_dict()
        assert a == b


VERDICT_POOL = ["Approve", "Reject", "NeedMoreData", "ReferDomain"]


def random_policy(rng, ontology):
    def feedback(round_index, sem, experts):
        out = []
        for expert in experts:
            verdict = rng.choice(VERDICT_POOL)
            if verdict == "NeedMoreData":
                out.append(ident.ExpertFeedback(
                    expert, verdict, attributes=frozenset({rng.choice(["age", "location", "history"])})))
            elif verdict == "ReferDomain":
                out.append(ident.ExpertFeedback(
                    expert, verdict, tags=frozenset({rng.choice(sorted(ontology.tags))})))
            else:
                out.append(ident.ExpertFeedback(expert, verdict))
        return out

    def consumer(round_index, sem):
        supplied = {}
        for name in sorted(sem.missing_info):
            if rng.random() < 0.6:
                supplied[name] = "v"
        return supplied, rng.random() < 0.8

    return feedback, consumer


class TestLoopProperties:
    def test_terminates_within_r_max_and_identified_is_sound(self, ontology):
        rng = random.Random(1234)
        for _ in range(300):
            sem = ident.parse_request(CARDIO_TEXT, {}, ontology, THETA)
            feedback, consumer = random_policy(rng, ontology)
            final = ident.run_identification(
                sem, ["e1", "e2"], feedback, consumer, ontology, THETA, r_max=8)
            assert final.status in ident.TERMINAL
            assert final.iteration <= 8
            if final.status == "Identified":
                assert final.missing_info == set()

    def test_abandon_is_absorbing(self, ontology):
        sem = ident.parse_request(CARDIO_TEXT, {}, ontology, THETA)
        sem = ident.abandon(sem)
        assert sem.status == "Abandoned"
        with pytest.raises(ValueError):
            ident.step_identification(sem, [], True, 8)

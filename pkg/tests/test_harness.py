"""Run records, replay, reporting, scenario parsing, CLI exit codes."""
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from agora import harness
from agora.cli import main as cli_main
from agora.corpus import corpus, medical_scenario
from agora.errors import NonTerminalRecord, ParseError, ReplayDivergence, UnknownDigest
from agora.scenario import parse_scenario


class TestScenarioParsing:
    def test_unknown_top_level_key_rejected(self):
        raw = medical_scenario()
        raw["surprise"] = True
        with pytest.raises(ParseError):
            parse_scenario(raw)

    def test_unknown_nested_key_rejected(self):
        raw = medical_scenario()
        raw["request"]["color"] = "red"
        with pytest.raises(ParseError):
            parse_scenario(raw)

    def test_digest_is_canonical_and_key_order_independent(self):
        a = medical_scenario()
        b = json.loads(json.dumps(a, sort_keys=True))
        assert parse_scenario(a).digest() == parse_scenario(b).digest()

    def test_digest_changes_with_content(self):
        a = parse_scenario(medical_scenario()).digest()
        b = parse_scenario(medical_scenario(seed=1)).digest()
        assert a != b

    def test_interactive_requires_opt_in(self):
        raw = medical_scenario()
        raw["policies"]["patient-1"] = "interactive"
        with pytest.raises(ParseError):
            parse_scenario(raw)
        parse_scenario(raw, allow_interactive=True)


class TestRunRecord:
    def test_run_produces_terminal_record(self, medical):
        record = harness.run(medical)
        assert record.outcome == "Provisioned"
        assert record.events[-1]["event"] == "outcome"

    def test_record_round_trips_through_jsonl(self, medical, tmp_path):
        record = harness.run(medical)
        path = tmp_path / "run.jsonl"
        record.save(path)
        loaded = harness.load_record(path)
        assert loaded.event_lines() == record.event_lines()
        assert loaded.outcome == record.outcome
        assert loaded.scenario_digest == record.scenario_digest

    def test_truncated_prefix_still_parses(self, medical, tmp_path):
        record = harness.run(medical)
        path = tmp_path / "run.jsonl"
        lines = record.to_jsonl().splitlines()
        path.write_text("\n".join(lines[:4]) + "\n")
        loaded = harness.load_record(path)
        assert len(loaded.events) == 3
        assert loaded.outcome is None


class TestReplay:
    def test_replay_matches_bytes(self, medical):
        record = harness.run(medical)
        fresh = harness.replay(record)
        assert fresh.log_hash() == record.log_hash()

    def test_tampered_event_diverges_with_line_number(self, medical):
        record = harness.run(medical)
        record.events[5] = dict(record.events[5], tick=999999)
        with pytest.raises(ReplayDivergence) as exc:
            harness.replay(record)
        assert exc.value.line_no == 6

    def test_tampered_scenario_rejected_by_digest(self, medical):
        record = harness.run(medical)
        record.scenario_raw = dict(record.scenario_raw, seed=77)
        with pytest.raises(UnknownDigest):
            harness.replay(record)

    def test_missing_scenario_rejected(self, medical):
        record = harness.run(medical)
        record.scenario_raw = None
        with pytest.raises(UnknownDigest):
            harness.replay(record)


class TestReport:
    def test_medical_metrics(self, medical):
        metrics = harness.report(harness.run(medical))
        assert metrics["outcome"] == "Provisioned"
        assert metrics["tasks"] == 3
        assert metrics["contracts"] == 3
        assert metrics["total_price"] == "175/2"
        assert metrics["social_welfare"] == "65"
        assert metrics["identification_rounds"] == 2
        assert metrics["reassignments"] == 0

    def test_non_terminal_record_rejected(self, medical):
        record = harness.run(medical)
        record.events = record.events[:3]
        with pytest.raises(NonTerminalRecord):
            harness.report(record)


class TestCorpus:
    def test_twenty_scenarios_all_terminal(self):
        entries = corpus()
        assert len(entries) == 20
        outcomes = {}
        for name, raw in entries.items():
            record = harness.run(parse_scenario(raw))
            outcomes[name] = record.outcome
        assert set(outcomes.values()) <= {
            "Provisioned", "Abandoned", "Unresolvable", "WorkflowFailed"}
        assert "Provisioned" in outcomes.values()


class TestCli:
    def _write_scenario(self, tmp_path, raw):
        path = tmp_path / "s.json"
        path.write_text(json.dumps(raw))
        return str(path)

    def test_run_success_exit_zero(self, tmp_path):
        runner = CliRunner()
        path = self._write_scenario(tmp_path, medical_scenario())
        out = str(tmp_path / "rec.jsonl")
        result = runner.invoke(cli_main, ["run", path, "--out", out])
        assert result.exit_code == 0
        assert json.loads(result.output)["outcome"] == "Provisioned"
        assert Path(out).exists()

    def test_run_failure_exit_two(self, tmp_path):
        from agora.corpus import reject_scenario
        runner = CliRunner()
        path = self._write_scenario(tmp_path, reject_scenario())
        result = runner.invoke(cli_main, ["run", path])
        assert result.exit_code == 2

    def test_run_parse_error_exit_three(self, tmp_path):
        runner = CliRunner()
        bad = dict(medical_scenario(), surprise=1)
        path = self._write_scenario(tmp_path, bad)
        result = runner.invoke(cli_main, ["run", path])
        assert result.exit_code == 3

    def test_replay_clean_and_tampered(self, tmp_path):
        runner = CliRunner()
        path = self._write_scenario(tmp_path, medical_scenario())
        out = str(tmp_path / "rec.jsonl")
        runner.invoke(cli_main, ["run", path, "--out", out])
        ok = runner.invoke(cli_main, ["replay", out])
        assert ok.exit_code == 0
        lines = Path(out).read_text().splitlines()
        tampered = json.loads(lines[3])
        tampered["tick"] = 424242
        lines[3] = json.dumps(tampered, sort_keys=True, separators=(",", ":"))
        Path(out).write_text("\n".join(lines) + "\n")
        bad = runner.invoke(cli_main, ["replay", out])
        assert bad.exit_code == 2

    def test_report_reads_saved_record(self, tmp_path):
        runner = CliRunner()
        path = self._write_scenario(tmp_path, medical_scenario())
        out = str(tmp_path / "rec.jsonl")
        runner.invoke(cli_main, ["run", path, "--out", out])
        result = runner.invoke(cli_main, ["report", out])
        assert result.exit_code == 0
        assert json.loads(result.output)["total_price"] == "175/2"

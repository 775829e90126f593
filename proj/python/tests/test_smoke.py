import json
import math
import os
import subprocess
from pathlib import Path

import pytest

import hybridbench as hb

FIXTURES = Path(os.environ.get("HB_FIXTURE_DIR", Path(__file__).resolve().parents[2] / "tests" / "fixtures"))


def test_answer_extraction():
    assert hb.extract_picks("work\nANSWER: C, E", 6, 2) == ["C", "E"]
    assert hb.extract_picks("$\\boxed{C,F}$", 6, 2) == ["C", "F"]
    assert hb.extract_picks("no idea", 6, 2) is None


def test_scores_and_baselines():
    assert hb.loose_score({"A", "B"}, {"A", "C"}, 2) == 0.5
    assert hb.tight_score(None, {"A", "C"}) == 0.0
    assert hb.guess_baseline(2, 6) == pytest.approx(1 / 15)
    assert hb.weighted_mcq_scores([5, 3]) == [62.5, 37.5]
    with pytest.raises(hb.PreconditionError):
        hb.weighted_mcq_scores([1])


def test_perplexity():
    assert hb.option_perplexity([-1.0, -2.0]) == pytest.approx(math.exp(1.5))
    assert hb.choose_lowest([3.0, 3.0]) == (0, True)


def test_fingerprint():
    assert hb.normalize_fingerprint("a b\n\tc") == "abc"


def test_parse_corpus():
    items, diags = hb.parse_corpus((FIXTURES / "corpus.txt").read_text(), "corpus.txt")
    assert len(items) == 24
    assert not diags
    assert {i["kind"] for i in items} == {"definition", "proposition-proof"}


def test_config_errors():
    cfg = hb.load_config(FIXTURES / "config.toml")
    assert cfg["params"]["k1"] == 8
    with pytest.raises(hb.ConfigError):
        hb.load_config(FIXTURES / "missing.toml")


def test_pipeline_end_to_end(tmp_path):
    script = (FIXTURES / "mock_script.jsonl").read_text()
    p = hb.Pipeline(FIXTURES / "config.toml", tmp_path / "run", script)
    results = p.run_all()
    assert [r["stage"] for r in results] == list(hb.STAGES)
    assert all(r["executed"] for r in results)
    assert not any(r["executed"] for r in p.run_all())
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert {r["protocol"] for r in report} == {"generation", "perplexity"}
    out = p.export_public(tmp_path / "public.jsonl")
    assert '"truth"' not in Path(out).read_text()


def test_missing_upstream(tmp_path):
    p = hb.Pipeline(FIXTURES / "config.toml", tmp_path / "run")
    with pytest.raises(hb.StageError):
        p.run_stage("score")


@pytest.mark.skipif("HB_CLI_PATH" not in os.environ, reason="CLI path not provided")
def test_cli_help():
    out = subprocess.run([os.environ["HB_CLI_PATH"], "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "run-all" in out.stdout

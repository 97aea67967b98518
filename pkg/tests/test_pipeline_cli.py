from __future__ import annotations

import json
import shutil
import subprocess
import sys
import time
from pathlib import Path

import pytest

from peel.canon import digest
from peel.cli import EXIT_BACKEND, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main
from peel.pipeline import bundled_corpus
from peel.store import STAGES, tree_digest

CORPUS = bundled_corpus()
SCRIPT = CORPUS / "mock_script.json"


def peel(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "peel.cli", *args], capture_output=True, text=True)


def _only_run(out: Path) -> Path:
    (run,) = (out / "runs").iterdir()
    return run


def test_help_lists_every_command():
    res = peel("--help")
    assert res.returncode == 0
    for cmd in ("ingest", *STAGES, "run-all", "validate", "bundled"):
        assert cmd in res.stdout
    for cmd in ("ingest", "segment", "run-all", "stats", "validate"):
        assert peel(cmd, "--help").returncode == 0


def test_usage_errors_exit_3(tmp_path):
    assert peel("run-all", "--bogus").returncode == EXIT_USAGE
    assert peel("segment", "--mock", "--script", str(SCRIPT)).returncode == EXIT_USAGE  # no --run-id
    assert main(["run-all", "--mock", "--script", str(SCRIPT), "--parallel", "0", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["run-all", "--out", str(tmp_path)]) == EXIT_USAGE  # live mode without backends


def test_stage_before_ingest_exits_3(tmp_path, capsys):
    code = main(["disagree", "--mock", "--script", str(SCRIPT), "--run-id", "x", "--out", str(tmp_path)])
    assert code == EXIT_USAGE
    assert "ingest" in capsys.readouterr().err


def test_stage_out_of_order_exits_3(tmp_path, capsys):
    common = ["--mock", "--script", str(SCRIPT), "--run-id", "r", "--out", str(tmp_path)]
    assert main(["ingest", *map(str, sorted((CORPUS / "transcripts").iterdir())), *common]) == EXIT_OK
    capsys.readouterr()
    assert main(["disagree", *common]) == EXIT_USAGE
    assert "'segment'" in capsys.readouterr().err


def test_api_key_in_config_is_refused(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mock": True, "script": str(SCRIPT), "api_key": "sk-123"}), encoding="utf-8")
    assert main(["run-all", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE


def test_live_backend_without_credentials_exits_1(tmp_path, monkeypatch):
    for k in ("PEELX_BASE_URL", "PEELX_API_KEY"):
        monkeypatch.delenv(k, raising=False)
    spec = {"model": "m", "env_prefix": "PEELX"}
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"worker_a": spec, "worker_b": {**spec, "model": "n"}, "integrator": spec}), encoding="utf-8")
    assert main(["run-all", "--config", str(cfg), "--out", str(tmp_path / "o"), "--run-id", "r"]) == EXIT_BACKEND


def test_validate_exit_codes(tmp_path, table2_dir, boomer_dict):
    assert main(["validate", str(table2_dir)]) == EXIT_OK
    bad = dict(boomer_dict, premises=boomer_dict["premises"][1:])
    (tmp_path / "bad.json").write_text(json.dumps(bad), encoding="utf-8")
    assert main(["validate", str(tmp_path / "bad.json")]) == EXIT_VALIDATION
    (tmp_path / "broken.json").write_text("{", encoding="utf-8")
    assert main(["validate", str(tmp_path / "broken.json")]) == EXIT_VALIDATION


def test_empty_transcript_exits_2(tmp_path):
    (tmp_path / "e.txt").write_text("", encoding="utf-8")
    code = main(["ingest", str(tmp_path / "e.txt"), "--mock", "--script", str(SCRIPT), "--out", str(tmp_path / "o")])
    assert code == EXIT_VALIDATION


def test_stats_on_chain_directory(table2_dir, capsys):
    assert main(["stats", "--chains", str(table2_dir)]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert [c["total"] for c in doc["per_chain"]] == [12, 31]


def test_bundled_prints_paths(capsys):
    assert main(["bundled"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert Path(doc["script"]).exists()


def test_run_all_twice_is_hash_identical(tmp_path):
    start = time.perf_counter()
    a = peel("run-all", "--mock", "--out", str(tmp_path / "a"))
    b = peel("run-all", "--mock", "--out", str(tmp_path / "b"), "--parallel", "1")
    assert a.returncode == 0, a.stderr
    assert b.returncode == 0, b.stderr
    assert time.perf_counter() - start < 30
    assert json.loads(a.stdout)["run_id"] == json.loads(b.stdout)["run_id"]
    ta, tb = tree_digest(_only_run(tmp_path / "a")), tree_digest(_only_run(tmp_path / "b"))
    assert ta == tb
    assert len(ta) > 30


def test_stage_by_stage_matches_run_all(tmp_path):
    assert main(["run-all", "--mock", "--out", str(tmp_path / "a"), "--run-id", "r"]) == EXIT_OK
    common = [
        "--mock", "--script", str(SCRIPT), "--themes", str(CORPUS / "themes.csv"),
        "--run-id", "r", "--out", str(tmp_path / "b"),
    ]
    files = [str(p) for p in sorted((CORPUS / "transcripts").iterdir())]
    assert main(["ingest", *files, "--speakers", str(CORPUS / "speakers.csv"), *common]) == EXIT_OK
    for stage in STAGES:
        assert main([stage, *common]) == EXIT_OK, stage
    assert tree_digest(tmp_path / "a" / "runs" / "r") == tree_digest(tmp_path / "b" / "runs" / "r")


def test_bundled_run_report_contents(tmp_path):
    assert main(["run-all", "--mock", "--out", str(tmp_path), "--run-id", "r"]) == EXIT_OK
    run = tmp_path / "runs" / "r"
    roots = {(r["doomer"].split(":")[1], r["root"], r["boomer_ref"], r["doomer_ref"], r["root_type"])
             for r in json.loads((run / "report" / "roots_T001.json").read_text())}
    assert roots == {("Tobias Venn", "D1", "P19", "P6", "factual"), ("Priya Raman", "D2", "P22", "P4", "causal")}
    cmap = json.loads((run / "aggregation" / "T001" / "conflict_map.json").read_text())
    assert [q["question_id"] for q in cmap["questions"]] == ["T001-Q001"]
    assert cmap["consistency_rate"] == 1.0
    csv_text = (run / "report" / "roots_T001.csv").read_bytes()
    assert csv_text.count(b"\r\n") == 3
    overall = json.loads((run / "report" / "agreement_overall.json").read_text())
    assert overall["all"]["counts"] == {"R1": 3, "R2": 5, "R3": 8}
    assert overall["all"]["composite"] == 0.65625
    assert overall["summarize"]["counts"]["R1"] == overall["summarize"]["n"]


def test_bad_reliability_weights_exit_3(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"reliability_weights": {"R9": 1}}))
    script = bundled_corpus() / "mock_script.json"
    assert main(["run-all", "--mock", "--config", str(cfg), "--script", str(script), "--out", str(tmp_path)]) == 3
    assert "reliability_weights" in capsys.readouterr().err


# digest of every file under report/ for the bundled mock run; update deliberately when outputs change
REPORT_TREE_DIGEST = "495f9c2ce10e6f3d6a9301041da669f1bbb2f6ecac030a18034c1889048a2ec4"


def test_report_tree_is_pinned(tmp_path):
    assert main(["run-all", "--mock", "--out", str(tmp_path), "--run-id", "r"]) == EXIT_OK
    got = digest(tree_digest(tmp_path / "runs" / "r" / "report"))
    assert got == REPORT_TREE_DIGEST

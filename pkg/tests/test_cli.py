import json

import numpy as np
import pytest

from tmct.cli import main
from tmct.reporting import load_score_table, manifest_determinism_key, strip_timing


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture
def bench(tmp_path):
    bank = tmp_path / "b.tmct-bank"
    stream = tmp_path / "s.tmct-stream"
    code = run_cli("synth", "--attributes", "3", "--objects", "4", "--dim", "16",
                   "--samples-per-comp", "4", "--seed", "5",
                   "--bank-out", str(bank), "--stream-out", str(stream),
                   "--feasibility-out", str(tmp_path / "f.tmct"))
    assert code == 0
    return tmp_path


def test_synth_writes_manifest(bench):
    manifest = json.loads((bench / "b.manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert "stream" in manifest["outputs"]


def test_run_produces_all_artifacts(bench):
    report = bench / "r.jsonl"
    code = run_cli("run", "--bank", str(bench / "b.tmct-bank"),
                   "--stream", str(bench / "s.tmct-stream"),
                   "--lr", "0.01", "--alpha", "0.5",
                   "--report-out", str(report))
    assert code == 0
    summary = json.loads((bench / "r.summary.json").read_text())
    for key in ("auc", "hm", "seen", "unseen", "top1_comp"):
        assert key in summary
    lines = report.read_text().splitlines()
    assert len(lines) == 48 + 1  # one per sample plus the summary record
    last = json.loads(lines[-1])
    assert last["summary"] is True and last["samples"] == 48
    curve = (bench / "r.curve.csv").read_text().splitlines()
    assert curve[0] == "bias,seen_acc,unseen_acc"


def test_rerun_is_byte_identical_modulo_timing(bench):
    args = ("run", "--bank", str(bench / "b.tmct-bank"),
            "--stream", str(bench / "s.tmct-stream"),
            "--lr", "0.02", "--alpha", "1.0", "--shuffle-seed", "3")
    texts = []
    manifests = []
    for name in ("r1", "r2"):
        report = bench / f"{name}.jsonl"
        assert run_cli(*args, "--report-out", str(report)) == 0
        texts.append((strip_timing(report.read_text()),
                      (bench / f"{name}.summary.json").read_text(),
                      (bench / f"{name}.curve.csv").read_text(),
                      (bench / f"{name}.scores").read_bytes()))
        manifests.append(json.loads((bench / f"{name}.manifest.json").read_text()))
    assert texts[0] == texts[1]
    assert (manifest_determinism_key(manifests[0])
            == manifest_determinism_key(manifests[1]))


def test_shuffle_seed_changes_order_not_set(bench):
    rows = []
    for seed in ("1", "2"):
        report = bench / f"o{seed}.jsonl"
        run_cli("run", "--bank", str(bench / "b.tmct-bank"),
                "--stream", str(bench / "s.tmct-stream"),
                "--lr", "0", "--alpha", "0", "--shuffle-seed", seed,
                "--report-out", str(report))
        table, _ = load_score_table(bench / f"o{seed}.scores")
        rows.append(table)
    assert not np.array_equal(rows[0].gt, rows[1].gt)
    assert sorted(rows[0].gt.tolist()) == sorted(rows[1].gt.tolist())


def test_eval_reproduces_run_summary(bench):
    report = bench / "r.jsonl"
    run_cli("run", "--bank", str(bench / "b.tmct-bank"),
            "--stream", str(bench / "s.tmct-stream"),
            "--lr", "0.01", "--alpha", "0.5", "--report-out", str(report))
    assert run_cli("eval", "--scores", str(bench / "r.scores"),
                   "--summary-out", str(bench / "e.json")) == 0
    run_summary = json.loads((bench / "r.summary.json").read_text())
    eval_summary = json.loads((bench / "e.json").read_text())
    for key in ("auc", "hm", "seen", "unseen", "top1_comp", "top1_attr", "top1_obj"):
        assert eval_summary[key] == run_summary[key]


def test_config_file_and_override(bench, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('lr = 0.5\n"lambda" = 2.0\nalpha = 0.25\ndisable = ["mcrl"]\n')
    report = bench / "c.jsonl"
    assert run_cli("run", "--bank", str(bench / "b.tmct-bank"),
                   "--stream", str(bench / "s.tmct-stream"),
                   "--config", str(cfg), "--lr", "0.001",
                   "--report-out", str(report)) == 0
    summary = json.loads((bench / "c.summary.json").read_text())
    assert summary["config"]["lr"] == 0.001      # CLI wins
    assert summary["config"]["lambda"] == 2.0    # file value survives
    assert summary["config"]["disable"] == ["mcrl"]


def test_frozen_baseline_two_roads_agree(bench):
    outs = []
    for name, extra in (("lrzero", ["--lr", "0", "--alpha", "0"]),
                        ("disabled", ["--lr", "0.05", "--alpha", "0",
                                      "--disable", "queue,tkam,vkam,mcrl"])):
        report = bench / f"{name}.jsonl"
        assert run_cli("run", "--bank", str(bench / "b.tmct-bank"),
                       "--stream", str(bench / "s.tmct-stream"), *extra,
                       "--report-out", str(report)) == 0
        outs.append(json.loads((bench / f"{name}.summary.json").read_text()))
    for key in ("auc", "hm", "seen", "unseen", "top1_comp"):
        assert outs[0][key] == outs[1][key]


def test_trend_output(bench):
    trend = bench / "t.csv"
    assert run_cli("run", "--bank", str(bench / "b.tmct-bank"),
                   "--stream", str(bench / "s.tmct-stream"),
                   "--lr", "0.01", "--trend-out", str(trend),
                   "--report-out", str(bench / "t.jsonl")) == 0
    lines = trend.read_text().splitlines()
    assert lines[0] == "samples,top1_all,top1_seen,top1_unseen"
    assert len(lines) == 48 + 1
    assert run_cli("eval", "--scores", str(bench / "t.scores"),
                   "--summary-out", str(bench / "te.json"),
                   "--trend-out", str(bench / "te.csv")) == 0
    assert (bench / "te.csv").read_text() == trend.read_text()


def test_open_world_requires_feasibility_flag(bench):
    code = run_cli("run", "--bank", str(bench / "b.tmct-bank"),
                   "--stream", str(bench / "s.tmct-stream"), "--open-world")
    assert code == 2


def test_feasibility_without_open_world_rejected(bench):
    code = run_cli("run", "--bank", str(bench / "b.tmct-bank"),
                   "--stream", str(bench / "s.tmct-stream"),
                   "--feasibility", str(bench / "f.tmct"))
    assert code == 2


def test_open_world_run(bench):
    report = bench / "ow.jsonl"
    code = run_cli("run", "--bank", str(bench / "b.tmct-bank"),
                   "--stream", str(bench / "s.tmct-stream"),
                   "--open-world", "--feasibility", str(bench / "f.tmct"),
                   "--feasibility-threshold", "0.5",
                   "--lr", "0.01", "--report-out", str(report))
    assert code == 0
    summary = json.loads((bench / "ow.summary.json").read_text())
    assert summary["samples"] == 48


def test_missing_bank_is_data_error(bench):
    code = run_cli("run", "--bank", str(bench / "nope.tmct-bank"),
                   "--stream", str(bench / "s.tmct-stream"))
    assert code == 3


def test_gradcheck_command():
    assert run_cli("gradcheck", "--seeds", "3") == 0


def test_gradcheck_fails_with_absurd_tolerance():
    assert run_cli("gradcheck", "--seeds", "2", "--tol", "1e-18") == 4


def test_checkpoint_round_trip(bench):
    from tmct.kam import load_kam_checkpoint
    ckpt = bench / "k.tmct"
    run_cli("run", "--bank", str(bench / "b.tmct-bank"),
            "--stream", str(bench / "s.tmct-stream"), "--lr", "0.05",
            "--checkpoint-out", str(ckpt),
            "--report-out", str(bench / "ck.jsonl"))
    kam, header, mats = load_kam_checkpoint(ckpt)
    assert header["step_count"] == 48
    assert kam.delta_t.shape == (12, 16)
    assert np.any(kam.delta_t != 0.0)
    assert {"m_t", "u_t", "m_v", "u_v"} <= set(mats)

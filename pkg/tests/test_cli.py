import json

import pytest
from click.testing import CliRunner

from randamp.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


SMALL_SIM = {
    "protocol": {"n": 4000, "eps": 0.0, "delta": 1e-8,
                 "mu1": 1e-9, "kappa": 4e-10, "enforce_bounds": False},
    "device": {"kind": "ideal"},
    "source": {"strategy": "unbiased"},
    "extractor": {"m": 8, "L": 64, "rule": "target_rounds"},
    "master_seed": 424242,
    "trials": 3,
}


def write_config(tmp_path, cfg):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_certify_small_grid(runner, tmp_path):
    res = runner.invoke(main, ["certify", "--delta-grid", "0,0.1",
                               "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    summary = json.loads((tmp_path / "certify_summary.json").read_text())
    assert [r["optimum"] for r in summary["results"]] == ["3/4", "23/30"]
    assert all(r["certificate_verified"] for r in summary["results"])
    assert all(r["optimum_attained"] for r in summary["results"])
    assert (tmp_path / "certificate_cap_0.json").exists()
    assert (tmp_path / "certificate_cap_1over10.json").exists()


def test_certify_rejects_negative_grid(runner, tmp_path):
    res = runner.invoke(main, ["certify", "--delta-grid", "0,-0.1",
                               "--out", str(tmp_path)])
    assert res.exit_code == 2


def test_simulate_emits_outputs(runner, tmp_path):
    cfg = write_config(tmp_path, SMALL_SIM)
    out = tmp_path / "out"
    res = runner.invoke(main, ["simulate", "--config", cfg, "--out", str(out)])
    assert res.exit_code == 0, res.output
    csv = (out / "campaign.csv").read_text().splitlines()
    assert csv[0].startswith("# randamp ")
    assert csv[1] == "trial,Ln,Sn,verdict"
    assert len(csv) == 2 + 3
    summary = json.loads((out / "simulate_summary.json").read_text())
    assert summary["trials"] == 3
    assert (out / "trial0.jsonl").exists()


def test_simulate_idempotent(runner, tmp_path):
    cfg = write_config(tmp_path, SMALL_SIM)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        res = runner.invoke(main, ["simulate", "--config", cfg, "--out", str(out)])
        assert res.exit_code == 0, res.output
    assert (out1 / "campaign.csv").read_bytes() == (out2 / "campaign.csv").read_bytes()
    assert (out1 / "trial0.jsonl").read_bytes() == (out2 / "trial0.jsonl").read_bytes()


def test_simulate_rejects_invalid_params(runner, tmp_path):
    bad = dict(SMALL_SIM, protocol=dict(SMALL_SIM["protocol"],
                                        enforce_bounds=True, delta=0.5))
    cfg = write_config(tmp_path, bad)
    res = runner.invoke(main, ["simulate", "--config", cfg,
                               "--out", str(tmp_path / "out")])
    assert res.exit_code == 2


def test_replay_reproduces_stored_run(runner, tmp_path):
    cfg = write_config(tmp_path, SMALL_SIM)
    out = tmp_path / "out"
    assert runner.invoke(main, ["simulate", "--config", cfg,
                                "--out", str(out)]).exit_code == 0
    res = runner.invoke(main, ["replay", str(out / "trial0.jsonl")])
    assert res.exit_code == 0, res.output
    body = json.loads(res.output)
    assert body["identical"] is True


def test_replay_detects_tampering(runner, tmp_path):
    cfg = write_config(tmp_path, SMALL_SIM)
    out = tmp_path / "out"
    assert runner.invoke(main, ["simulate", "--config", cfg,
                                "--out", str(out)]).exit_code == 0
    path = out / "trial0.jsonl"
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["x"] = [1, 3] if rec["x"] != [1, 3] else [2, 2]
    rec["u"] = [1, 2]
    lines[1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    res = runner.invoke(main, ["replay", str(path)])
    assert res.exit_code == 1


def test_replay_malformed_file(runner, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("this is not json\n")
    res = runner.invoke(main, ["replay", str(bad)])
    assert res.exit_code == 2


def test_extract_matches_stored_output(runner, tmp_path):
    cfg = write_config(tmp_path, SMALL_SIM)
    out = tmp_path / "out"
    assert runner.invoke(main, ["simulate", "--config", cfg,
                                "--out", str(out)]).exit_code == 0
    summary = json.loads((out / "trial0.jsonl").read_text().splitlines()[-1])
    assert summary["verdict"] == "Accept"
    res = runner.invoke(main, ["extract", str(out / "trial0.jsonl"),
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert res.output.strip().endswith(summary["output_hex"])
    sidecar = json.loads((out / "extracted.json").read_text())
    assert sidecar["output_hex"] == summary["output_hex"]
    stored = summary["extraction"]
    assert sidecar["validity_condition_met"] == stored["honest_condition_met"]
    assert sidecar["rates"]["rate_t"] == stored["rate_t"] == 1.0


def test_report_fields_and_aborted_run(runner, tmp_path):
    cfg = write_config(tmp_path, dict(SMALL_SIM, device={"kind": "uniform"}))
    out = tmp_path / "out"
    assert runner.invoke(main, ["simulate", "--config", cfg,
                                "--out", str(out)]).exit_code == 0
    res = runner.invoke(main, ["report", "--config", cfg,
                               "--run-file", str(out / "trial0.jsonl"),
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    rep = json.loads((out / "security_report.json").read_text())
    assert rep["run_verdict"] == "AbortBell"
    assert "min_entropy_bound" not in rep
    assert rep["note"].startswith("run aborted")
    assert "config_hash" in rep and "version" in rep


def test_report_plain(runner, tmp_path):
    cfg = write_config(tmp_path, SMALL_SIM)
    res = runner.invoke(main, ["report", "--config", cfg,
                               "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "security_report.json").read_text())
    for key in ("mu2", "mu3", "mu4", "gamma", "eps_az1", "eps_az2", "delta1"):
        assert key in rep


def test_verify_bounds_table(runner, tmp_path):
    res = runner.invoke(main, ["verify-bounds", "--trials", "2000",
                               "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    table = (tmp_path / "bounds_table.csv").read_text().splitlines()
    assert table[0].startswith("# randamp ")
    assert table[1] == "family,n,param,empirical,bound,pass"
    assert all(line.endswith("True") for line in table[2:])

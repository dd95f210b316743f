import csv

import numpy as np
import pytest

from vflsim.cli import main
from vflsim.experiment import SCHEMA_LINE

CFG = """\
[data]
kind = adult
rows = 400

[channel]
kind = identity

[train]
epochs = 2
seeds = 0
"""


def _rows(path):
    lines = path.read_text().splitlines()
    assert lines[0] == SCHEMA_LINE
    return list(csv.DictReader(lines[1:]))


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "mini.ini"
    p.write_text(CFG)
    return p


def test_run_outputs(cfg_path, tmp_path):
    out = tmp_path / "r"
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    res = _rows(out / "results.csv")
    assert len(res) == 2 and list(res[0]) == ["seed", "epoch", "loss", "test_auc"]
    led = _rows(out / "ledger.csv")
    assert {r["participant"] for r in led} == {"guest0", "guest1", "guest2", "host"}
    assert len(led) == 2 * 4
    assert (out / "config.resolved.ini").exists()


def test_run_deterministic_and_resolved_rerun(cfg_path, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    main(["run", "--config", str(cfg_path), "--out", str(a)])
    main(["run", "--config", str(cfg_path), "--out", str(b)])
    main(["run", "--config", str(a / "config.resolved.ini"), "--out", str(c)])
    for name in ("results.csv", "ledger.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()


def test_seed_override_and_env_root(cfg_path, tmp_path, monkeypatch):
    monkeypatch.setenv("VFLSIM_OUT_ROOT", str(tmp_path / "root"))
    assert main(["run", "--config", str(cfg_path), "--seed-override", "7"]) == 0
    res = _rows(tmp_path / "root" / "mini" / "results.csv")
    assert {r["seed"] for r in res} == {"7"}


def test_invalid_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text(CFG + "\n[dp]\nepsilon = 1\n\n[quantize]\nn_buckets = 4\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "bad.ini:" in capsys.readouterr().err


def test_sweep_summary(cfg_path, tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(cfg_path), "--axis", "dp.epsilon",
                 "--values", "1,1.5,2", "--out", str(out)]) == 0
    rows = _rows(out / "summary.csv")
    assert [r["value"] for r in rows] == ["1", "1.5", "2"]
    for v in ("1", "1.5", "2"):
        assert (out / f"dp.epsilon={v}" / "results.csv").exists()
    assert "guest0_flops_fwd" in rows[0] and "host_bytes_received" in rows[0]


def test_sweep_schemes_cost_shape(cfg_path, tmp_path):
    out = tmp_path / "s"
    main(["sweep", "--config", str(cfg_path), "--axis", "scheme.cut_layer", "--values", "1,2,3",
          "--out", str(out)])
    rows = _rows(out / "summary.csv")
    g = [int(r["guest0_flops_fwd"]) for r in rows]
    h = [int(r["host_flops_fwd"]) for r in rows]
    assert g[0] < g[1] < g[2] and h[0] > h[1] > h[2]


@pytest.mark.parametrize("values,axis", [(",", "dp.epsilon"), ("1", "train.lr")])
def test_sweep_errors(cfg_path, tmp_path, values, axis):
    assert main(["sweep", "--config", str(cfg_path), "--axis", axis, "--values", values,
                 "--out", str(tmp_path / "x")]) == 2


def test_report_matches_recomputation(cfg_path, tmp_path, capsys):
    out = tmp_path / "r"
    cfg_path.write_text(CFG.replace("seeds = 0", "seeds = 0, 1, 2"))
    main(["run", "--config", str(cfg_path), "--out", str(out)])
    assert main(["report", str(out), "--table"]) == 0
    raw = _rows(out / "results.csv")
    agg = _rows(out / "aggregate.csv")
    for row in agg:
        vals = [float(r["test_auc"]) for r in raw if r["epoch"] == row["epoch"]]
        assert int(row["n_seeds"]) == len(vals) == 3
        mean = sum(vals) / 3
        std = (sum((v - mean) ** 2 for v in vals) / 3) ** 0.5
        assert float(row["auc_mean"]) == pytest.approx(mean, rel=1e-12)
        assert float(row["auc_std"]) == pytest.approx(std, rel=1e-9, abs=1e-15)
    assert "auc_mean" in capsys.readouterr().out


def test_report_single_seed_std_zero(cfg_path, tmp_path):
    out = tmp_path / "r"
    main(["run", "--config", str(cfg_path), "--out", str(out)])
    main(["report", str(out)])
    assert all(float(r["auc_std"]) == 0.0 for r in _rows(out / "aggregate.csv"))


def test_report_missing(tmp_path):
    assert main(["report", str(tmp_path)]) == 1


def test_gen_data(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["gen-data", "--kind", "avazu", "--rows", "30", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 31 and len(lines[0].split(",")) == 23

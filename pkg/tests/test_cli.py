import csv
import io
import json
import math

import numpy as np
import pytest

from ldpgof import mechanisms as mech
from ldpgof.harness import cli


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_audit_reports_all_channels(capsys):
    code, out, err = _run(capsys, "audit", "--alpha", "0.5", "--mechanism", "ni")
    assert code == 0
    d = json.loads(out)
    for name in ("kernel_laplace", "tail_bits", "interactive"):
        assert d[name] <= math.exp(0.5) + 1e-12
    assert d["tail_bits_outputs"]["plus"] == pytest.approx(2 * math.exp(0.5) / (math.exp(0.5) + 1))
    assert d["passed"] is True
    assert "finished" in err


@pytest.mark.parametrize("argv,needle", [
    (["audit", "--alpha", "1.5"], "alpha must lie in (0, 1]"),
    (["audit", "--alpha", "0"], "alpha"),
    (["audit", "--gamma", "1.0"], "gamma"),
    (["audit", "--null", "gamma:2"], "unknown density"),
])
def test_usage_errors_exit_2(capsys, argv, needle):
    code, _, err = _run(capsys, *argv)
    assert code == 2
    assert needle in err


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["audit", "--alpha", "x"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code == 2


def test_config_file_is_overridden_by_flags(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nalpha = 0.25\nn=300\nmechanism=interactive\n")
    code, out, _ = _run(capsys, "test", "--config", str(cfg), "--alpha", "0.75")
    assert code == 0
    d = json.loads(out)
    assert d["alpha"] == 0.75 and d["n"] == 300 and d["mechanism"] == "interactive"


def test_config_file_rejects_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("alhpa=0.5\n")
    with pytest.raises(SystemExit) as e:
        cli.main(["audit", "--config", str(cfg)])
    assert e.value.code == 2
    assert "alhpa" in capsys.readouterr().err


def test_test_command_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert _run(capsys, "test", "--n", "500", "--seed", "3", "--out", str(p))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_moments_interactive_passes(tmp_path, capsys):
    out = tmp_path / "m.json"
    code, _, err = _run(capsys, "moments", "--mechanism", "interactive", "--reps", "200",
                        "--n", "500", "--out", str(out))
    assert code == 0, err
    reps = json.loads(out.read_text())
    assert [r["statistic"] for r in reps] == ["D_B", "T_B"]
    assert all(c["passed"] for r in reps for c in r["checks"])


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_privatize_round_trip(tmp_path, capsys, fmt):
    out = tmp_path / "batches"
    code, _, _ = _run(capsys, "privatize", "--mechanism", "interactive", "--n", "200",
                      "--format", fmt, "--out", str(out))
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(f"{k}.{fmt}" for k in ("bins", "clipped", "tail"))
    path = out / f"tail.{fmt}"
    p = mech.PrivacyParams.from_alpha(0.5, 200)
    if fmt == "csv":
        b = mech.read_batch_csv(io.StringIO(path.read_text()), p)
    else:
        with open(path, "rb") as fh:
            b = mech.read_batch_binary(fh, p)
    assert b.kind is mech.BatchKind.TAIL_BITS and b.values.shape == (200,)


def test_privatize_from_input_file(tmp_path, capsys):
    data = tmp_path / "x.txt"
    np.savetxt(data, np.random.default_rng(0).random(400))
    code, _, _ = _run(capsys, "privatize", "--n", "200", "--input", str(data),
                      "--out", str(tmp_path / "o"))
    assert code == 0
    code, _, err = _run(capsys, "privatize", "--n", "300", "--input", str(data))
    assert code == 2 and "needs" in err


def test_risk_csv_output(capsys):
    code, out, err = _run(capsys, "risk", "--n", "300", "--reps", "20", "--delta", "0.01")
    assert code == 0
    row = next(csv.DictReader(io.StringIO(out)))
    assert row["reps"] == "20" and float(row["l1_distance"]) > 0
    assert "type II" in err


def test_rates_small_grid(tmp_path, capsys):
    out = tmp_path / "rates.csv"
    code, _, err = _run(capsys, "rates", "--mechanism", "interactive", "--grid", "4",
                        "--start-exp", "9", "--reps", "30", "--calib-reps", "60",
                        "--out", str(out))
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [int(r["n"]) for r in rows] == [512, 1024, 2048, 4096]
    fit = json.loads((tmp_path / "rates.fit.json").read_text())
    assert code == (1 if "error" in fit else 0)
    with pytest.raises(SystemExit):
        cli.main(["rates", "--grid", "two"])
    assert _run(capsys, "rates", "--grid", "3")[0] == 2

import json

import numpy as np
import pytest

from hermflow import runlog, synthetic
from hermflow.cli import EXIT_FAIL, EXIT_OK, EXIT_SINGULAR, EXIT_USAGE, main

IW = ["--backend", "homogeneous", "--n", "3", "--preset", "iwasawa-balanced", "--a", "1", "--b", "2"]


def _cfg(tmp_path, **extra):
    data = {"schema_version": 1, "backend": {"kind": "homogeneous", "n": 3},
            "metric": {"preset": "iwasawa-balanced", "a": 1.0, "b": 2.0}}
    data.update(extra)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return p


def test_run_writes_directory(tmp_path, capsys):
    code = main(["run", *IW, "--dt", "1e-3", "--t-max", "0.01", "--out", str(tmp_path), "--name", "a"])
    assert code == EXIT_OK
    assert "run directory" in capsys.readouterr().out
    for name in (runlog.CSV_NAME, runlog.MANIFEST_NAME, runlog.SNAPSHOT_DIR):
        assert (tmp_path / "a" / name).exists()


def test_run_is_deterministic(tmp_path, monkeypatch):
    monkeypatch.setenv("HERMFLOW_OUT", str(tmp_path))
    cfg = _cfg(tmp_path, dt=1e-3, t_max=0.01, formulation="both")
    assert main(["run", str(cfg), "--name", "one"]) == EXIT_OK
    assert main(["run", str(cfg), "--name", "two"]) == EXIT_OK
    a = (tmp_path / "one" / runlog.CSV_NAME).read_bytes()
    b = (tmp_path / "two" / runlog.CSV_NAME).read_bytes()
    assert a == b
    snaps = sorted((tmp_path / "one" / runlog.SNAPSHOT_DIR).iterdir())
    for s in snaps:
        assert s.read_bytes() == (tmp_path / "two" / runlog.SNAPSHOT_DIR / s.name).read_bytes()


def test_default_name_is_config_hash(tmp_path):
    cfg = _cfg(tmp_path, dt=1e-3, t_max=0.004)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    (d,) = list((tmp_path / "o").iterdir())
    manifest = json.loads((d / runlog.MANIFEST_NAME).read_text())
    assert d.name == "run-" + manifest["config_hash"][:12]


def test_run_singular_exit_code(tmp_path, capsys):
    code = main(["run", *IW, "--dt", "0.05", "--t-max", "0.5", "--c-safe", "0.1",
                 "--out", str(tmp_path), "--name", "s"])
    assert code == EXIT_SINGULAR
    assert "singular event" in capsys.readouterr().out


@pytest.mark.parametrize("args,msg", [
    (["--dt", "-1"], "dt"),
    (["--formulation", "heat"], ""),
    (["--preset", "tm1"], "metric.preset"),
])
def test_run_usage_errors(tmp_path, capsys, args, msg):
    assert main(["run", *IW, "--out", str(tmp_path), *args]) == EXIT_USAGE
    assert msg in capsys.readouterr().err


def test_run_bad_config_file(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{"schema_version": 1, "colour": "red"}')
    assert main(["run", str(p), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "colour" in capsys.readouterr().err


def test_check_identities(tmp_path, capsys):
    assert main(["check-identities", "--config", str(_cfg(tmp_path))]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    names = [ln.split("\t")[0] for ln in lines]
    assert "formulation_equivalence" in names
    assert all(ln.split("\t")[-1] in ("pass", "info") for ln in lines)


def test_check_identities_json_and_failure(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema_version": 1, "backend": {"kind": "torus", "n": 2, "N": 16},
                             "metric": {"preset": "tm1"}}))
    # 1/(1 + sin/2) is not band limited: at N = 16 its aliasing exceeds the tolerances
    assert main(["check-identities", "--config", str(p), "--json", "--no-geodesics"]) == EXIT_FAIL
    recs = [json.loads(ln) for ln in capsys.readouterr().out.splitlines()]
    by = {r["name"]: r for r in recs}
    assert by["first_ricci_log_det"]["verdict"] == "fail"
    assert by["spectral_tail[inverse_metric]"]["residual"] > 1e-10


def test_check_identities_skips_off_balance(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema_version": 1, "metric": {"preset": "kahler"}}))
    assert main(["check-identities", "--config", str(p), "--no-geodesics"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "formulation_equivalence\tnan" in out and "skip" in out


def test_check_identities_flat_snapshot(tmp_path, torus2, capsys):
    from hermflow import presets
    from hermflow.snapshot import save_state

    p = save_state(tmp_path / "flat.hfs", presets.flat(torus2))
    assert main(["check-identities", "--snapshot", str(p), "--json"]) == EXIT_OK
    recs = [json.loads(ln) for ln in capsys.readouterr().out.splitlines()]
    passed = [r for r in recs if r["verdict"] == "pass"]
    assert passed and all(r["residual"] <= 1e-12 for r in passed)
    assert all(r["verdict"] != "fail" for r in recs)


def test_check_identities_corrupt_snapshot(tmp_path, capsys):
    p = tmp_path / "bad.hfs"
    p.write_bytes(b"HFLOWSNP1\n" + (5).to_bytes(8, "little") + b"{oops")
    assert main(["check-identities", "--snapshot", str(p)]) == EXIT_USAGE
    assert "corrupted header" in capsys.readouterr().err


def test_classify(tmp_path, capsys):
    t, f, T = synthetic.canonical_curve("IIa")
    p = tmp_path / "s.csv"
    runlog.write_csv(p, {"t": t, "f": f})
    assert main(["classify", str(p), "--horizon", "1"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "Type IIa"
    assert json.loads(out[-1])["type"] == "IIa"
    # read with the wrong horizon the same data does not fit either bounded or divergent growth
    assert main(["classify", str(p)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("inconclusive")


def test_classify_errors(tmp_path, capsys):
    p = tmp_path / "s.csv"
    p.write_text("t,x\n0,1\n")
    assert main(["classify", str(p)]) == EXIT_USAGE
    assert "schema" in capsys.readouterr().err
    assert main(["classify", str(p), "--horizon", "soon"]) == EXIT_USAGE


def test_blowup_manufactured_type_i(tmp_path, iwasawa_state, capsys):
    synthetic.write_type_i_run(tmp_path / "m", iwasawa_state)
    assert main(["blowup", str(tmp_path / "m")]) == EXIT_OK
    out = tmp_path / "m" / "blowup"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["type"] == "I"
    rows = np.loadtxt(out / "curves.csv", delimiter=",", skiprows=1)
    assert np.all(rows[:, 2] <= rows[:, 3] * (1 + 1e-10))
    from hermflow.snapshot import load_state

    for m in manifest["members"]:
        st, meta = load_state(out / m["file"])
        assert meta["C_j"] == m["C_j"]
        assert abs(st.f() - 1.0) < 1e-8
    assert (out / "plot_blowup.py").exists()


def test_blowup_without_singularity(tmp_path, capsys):
    assert main(["run", "--preset", "flat", "--N", "8", "--t-max", "0.004", "--out", str(tmp_path),
                 "--name", "flat"]) == EXIT_OK
    assert main(["blowup", str(tmp_path / "flat")]) == EXIT_FAIL
    assert "no singularity detected" in capsys.readouterr().err


def test_blowup_missing_directory(tmp_path):
    assert main(["blowup", str(tmp_path / "nowhere")]) == EXIT_USAGE


def test_no_command_is_usage_error():
    assert main([]) == EXIT_USAGE
    assert main(["--help"]) == EXIT_OK

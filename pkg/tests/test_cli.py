import json

import pytest

from kspec.cli import main


def run_cli(tmp_path, name, cmd, config=None, extra=()):
    out = tmp_path / name
    argv = [cmd, "--out", str(out), *extra]
    if config is not None:
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps(config))
        argv += ["--config", str(cfg)]
    code = main(argv)
    return code, out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_figure_commands_require_seed(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["fig2", "--out", str(tmp_path / "x")])
    assert info.value.code == 2
    assert "seed" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path):
    with pytest.raises(SystemExit):
        run_cli(tmp_path, "bad", "fig2", {"seed": 1, "colour": "red"})


def test_fig2_reruns_are_byte_identical(tmp_path):
    cfg = {"seed": 3, "shapes": [[20, 40], [40, 20]]}
    code_a, a = run_cli(tmp_path, "a", "fig2", cfg)
    code_b, b = run_cli(tmp_path, "b", "fig2", cfg)
    assert code_a == code_b == 0
    files = manifest(a)["files"]
    assert files == manifest(b)["files"]
    assert any(f.startswith("atoms_kendall") for f in files)
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    ma, mb = manifest(a), manifest(b)
    assert ma["results"] == mb["results"]
    assert ma["config"]["shapes"] == [[20, 40], [40, 20]]


def test_flags_override_config(tmp_path):
    code, out = run_cli(tmp_path, "o", "fig1", {"seed": 1, "replications": 5,
                                                "shapes": [[30, 20]], "rhos": [0.0, 0.8]},
                        extra=["--seed", "2", "--replications", "3"])
    assert code == 0
    m = manifest(out)
    assert m["config"]["seed"] == 2 and m["config"]["replications"] == 3
    rows = (out / "fig1_gap.csv").read_text().splitlines()
    assert rows[0] == "rho,mean_gap,sd" and len(rows) == 3


def test_fig4_small(tmp_path):
    code, out = run_cli(tmp_path, "f4", "fig4", {"seed": 1, "shapes": [[60, 120]]},
                        extra=["--grid-points", "300", "--eta", "0.002"])
    assert code == 0
    res = manifest(out)["results"]["p60_n120"]
    assert abs(res["curve_mass"] - 1.0) < 1e-2
    assert res["max_density_gap_vs_indep"] > 0.05
    diag = json.loads((out / "diagnostics_ma1_p60_n120.json").read_text())
    assert all(d["residual"] <= 1e-10 for d in diag)


def test_lsd_command(tmp_path):
    code, out = run_cli(tmp_path, "lsd", "lsd", {"model": {"kind": "identity", "p": 1}, "c": 2.0,
                                                 "grid_points": 400, "eta": 0.002})
    assert code == 0
    res = manifest(out)["results"]
    assert res["atoms"][0][1] == pytest.approx(0.5, abs=1e-3)
    assert abs(res["curve_mass"] - 1.0) < 1e-2


def test_verify_quick_passes_and_corruption_fails(tmp_path, capsys):
    code, out = run_cli(tmp_path, "v", "verify", extra=["--quick"])
    assert code == 0
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert all({"name", "pass"} <= set(v) for v in verdicts)
    capsys.readouterr()
    code, out = run_cli(tmp_path, "vc", "verify", {"quick": True, "corrupt_sigma2": 1.01})
    assert code == 1
    failed = manifest(out)["results"]["failed"]
    assert "var_a12a13_check" in failed
    assert "FAILED var_a12a13_check" in capsys.readouterr().out


def test_lsd_needs_model(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["lsd", "--out", str(tmp_path / "l")])
    assert info.value.code == 2
    assert "model" in capsys.readouterr().err

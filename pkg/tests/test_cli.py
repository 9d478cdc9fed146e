"""End-to-end command-line behavior: exit codes, JSON payloads, artifacts."""

import csv
import json

import numpy as np
import pytest

from nonmono.cli import main
from nonmono.problems import builtin, save_problem


def _run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    out = json.loads(cap.out) if cap.out.strip() else None
    err = json.loads(cap.err) if cap.err.strip() else None
    return code, out, err


def _write_json(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _monotone_dict():
    return {
        "L": [[0.5, -1.0, 0.25], [0.0, 0.75, -0.5]],
        "A": {"type": "affine",
              "D": [[1.0, 0.6, -0.2], [-0.6, 1.0, 0.4], [0.2, -0.4, 1.0]],
              "q": [1.0, -2.0, 0.5]},
        "B": {"type": "affine", "D": [[1.0, 0.0], [0.0, 1.0]], "q": [0.3, -0.1]},
        "certificates": {"scalar": {"muA": 0.0, "rhoA": 0.0, "muB": 0.0, "rhoB": 0.0}},
    }


def test_solve_converges_and_writes_trace(tmp_path, capsys):
    out_csv = tmp_path / "trace.csv"
    code, payload, _ = _run(capsys, "solve", "--problem", "builtin:qp-indef",
                            "--out", str(out_csv))
    assert code == 0
    assert payload["status"] == "converged"
    assert payload["plan"]["mode"] == "semidefinite"
    assert payload["final_residual"] <= 1e-8
    with open(out_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:4] == ["k", "res_norm", "projdiff_norm", "shadow_norm"]
    assert len(rows) - 1 == payload["iters"]
    assert float(rows[-1][1]) == payload["final_residual"]


def test_solve_splices_requested_lambda(tmp_path, capsys):
    code, payload, _ = _run(capsys, "solve", "--problem", "builtin:singvals",
                            "--lambda", "2.1", "--out", str(tmp_path / "a.csv"))
    assert code == 0
    assert payload["plan"]["lambda"] == 2.1
    assert payload["plan"]["eta_prime"] is None      # infinity serializes as null
    code, payload, _ = _run(capsys, "solve", "--problem", "builtin:singvals",
                            "--lambda", "3.2", "--out", str(tmp_path / "b.csv"))
    assert code == 2
    assert payload["status"] == "diverged"
    assert payload["plan"]["lambda"] == 3.2


def test_solve_rejects_gamma_outside_window(tmp_path, capsys):
    code, _, err = _run(capsys, "solve", "--problem", "builtin:qp-rankdef",
                        "--gamma", "0.5", "--out", str(tmp_path / "t.csv"))
    assert code == 3
    assert err["condition"] == "RequestedOutOfWindow"
    assert "gamma" in err["error"]


def test_solve_rejects_nonpositive_lambda(tmp_path, capsys):
    code, _, err = _run(capsys, "solve", "--problem", "builtin:singvals",
                        "--lambda", "-1.0", "--out", str(tmp_path / "t.csv"))
    assert code == 3
    assert "lambda must be positive" in err["error"]


def test_solve_malformed_inputs(tmp_path, capsys):
    code, _, err = _run(capsys, "solve", "--problem", str(tmp_path / "nothere.json"),
                        "--out", str(tmp_path / "t.csv"))
    assert code == 64
    assert "no such problem file" in err["error"]
    assert "schema" in err
    garbled = tmp_path / "garbled.json"
    garbled.write_text("{not json")
    code, _, err = _run(capsys, "solve", "--problem", str(garbled),
                        "--out", str(tmp_path / "t.csv"))
    assert code == 64
    code, _, err = _run(capsys, "solve", "--problem", "builtin:nope",
                        "--out", str(tmp_path / "t.csv"))
    assert code == 64
    assert "no builtin" in err["error"]


def test_window_monotone_instance(tmp_path, capsys):
    path = _write_json(tmp_path, "mono.json", _monotone_dict())
    code, payload, _ = _run(capsys, "window", "--problem", path, "--gamma", "1.0")
    assert code == 0
    assert payload["gamma"] == [0.0, None]       # unbounded end is null
    assert payload["lambda"] == [0.0, 2.0]
    assert payload["eta_bar"] == 1.0
    assert payload["source"] == "moduli"
    norm_sq = np.linalg.norm(np.asarray(_monotone_dict()["L"]), 2) ** 2
    assert payload["tau_at_1.0"][0] == 0.0
    assert payload["tau_at_1.0"][1] == pytest.approx(1.0 / norm_sq, rel=1e-9)


def test_window_saddle(capsys):
    code, payload, _ = _run(capsys, "window", "--problem", "builtin:saddle",
                            "--gamma", "0.1")
    assert code == 0
    assert payload["gamma"][0] == pytest.approx(0.01, rel=1e-9)
    assert payload["gamma"][1] == pytest.approx(1.0, rel=1e-9)
    assert payload["tau_at_0.1"][1] == pytest.approx(2.5, rel=1e-12)
    assert 0.0 < payload["tau_at_0.1"][0] < 2.5
    assert payload["eta_prime"] == pytest.approx(0.9, rel=1e-12)
    assert payload["source"] == "oblique"


def test_window_default_gamma(capsys):
    code, payload, _ = _run(capsys, "window", "--problem", "builtin:qp-indef")
    assert code == 0
    assert any(k.startswith("tau_at_") for k in payload)
    assert payload["eta_bar"] == pytest.approx(0.5, abs=1e-12)


def test_certify_optimal_R(tmp_path, capsys):
    d = _write_json(tmp_path, "D.json", [[0.0, 1.0], [-1.0, 0.0]])
    m = _write_json(tmp_path, "M.json", [[-0.25, 0.0], [0.0, -0.25]])
    code, payload, _ = _run(capsys, "certify", "--matrix", d, "--M", m, "--optimal-R")
    assert code == 0
    np.testing.assert_allclose(payload["R_star"], 0.25 * np.eye(2), atol=1e-9)
    assert payload["slack"] >= -1e-9


def test_certify_check_modes(tmp_path, capsys):
    d = _write_json(tmp_path, "D.json", np.eye(2).tolist())
    m = _write_json(tmp_path, "M.json", (0.5 * np.eye(2)).tolist())
    r_good = _write_json(tmp_path, "Rg.json", (0.25 * np.eye(2)).tolist())
    r_bad = _write_json(tmp_path, "Rb.json", np.eye(2).tolist())
    code, payload, _ = _run(capsys, "certify", "--matrix", d, "--M", m, "--R", r_good)
    assert code == 0
    assert payload["certified"] is True
    assert payload["slack"] == pytest.approx(0.25, abs=1e-12)
    code, payload, _ = _run(capsys, "certify", "--matrix", d, "--M", m, "--R", r_bad)
    assert code == 1
    assert payload["certified"] is False
    # omitting --R checks against R = 0
    code, payload, _ = _run(capsys, "certify", "--matrix", d, "--M", m)
    assert code == 0
    assert payload["slack"] == pytest.approx(0.5, abs=1e-12)


def test_certify_infeasible(tmp_path, capsys):
    d = _write_json(tmp_path, "D.json", [[1.0, 0.0], [0.0, 0.0]])
    m = _write_json(tmp_path, "M.json", [[-1.0, 0.0], [0.0, 1.0]])
    code, _, err = _run(capsys, "certify", "--matrix", d, "--M", m, "--optimal-R")
    assert code == 1
    assert err["condition"] == "Infeasible"


def test_certify_input_validation(tmp_path, capsys):
    d = _write_json(tmp_path, "D.json", [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    m = _write_json(tmp_path, "M.json", np.eye(2).tolist())
    code, _, err = _run(capsys, "certify", "--matrix", d, "--M", m)
    assert code == 64
    assert "square matrix" in err["error"]
    d = _write_json(tmp_path, "D3.json", np.eye(3).tolist())
    code, _, err = _run(capsys, "certify", "--matrix", d, "--M", m)
    assert code == 64
    assert "matching shapes" in err["error"]


def test_spectral_saddle_tightness(capsys):
    code, payload, _ = _run(capsys, "spectral", "--problem", "builtin:saddle",
                            "--gamma", "0.1")
    assert code == 0
    assert payload["lambda_theorem"] == pytest.approx(162.0 / 101.0, abs=1e-10)
    assert payload["lambda_spectral"] == pytest.approx(payload["lambda_theorem"], abs=1e-3)
    assert payload["slack"] == pytest.approx(
        payload["lambda_spectral"] - payload["lambda_theorem"], abs=1e-12)


def test_spectral_projected_singvals(capsys):
    code, payload, _ = _run(capsys, "spectral", "--problem", "builtin:singvals",
                            "--gamma", "1.0", "--projected")
    assert code == 0
    assert payload["lambda_theorem"] == pytest.approx(2.5, abs=1e-12)
    assert payload["lambda_spectral"] >= 2.5 - 1e-6


def test_spectral_needs_affine_operators(capsys):
    code, _, err = _run(capsys, "spectral", "--problem", "builtin:qp-indef",
                        "--gamma", "0.1")
    assert code == 64
    assert "affine" in err["error"]


def test_spectral_no_stable_lambda(tmp_path, capsys):
    data = save_problem(builtin("saddle"))
    data["certificates"] = {"scalar": {"muA": 0.0, "rhoA": 0.0, "muB": 0.0, "rhoB": 0.0}}
    path = _write_json(tmp_path, "wishful.json", data)
    code, _, err = _run(capsys, "spectral", "--problem", path, "--gamma", "2.0")
    assert code == 1
    assert err["lambda_theorem"] == pytest.approx(2.0, abs=1e-12)
    assert "lambda" in err["error"]


def test_report_renders_figures(tmp_path, capsys):
    out_csv = tmp_path / "trace.csv"
    code, _, _ = _run(capsys, "solve", "--problem", "builtin:singvals",
                      "--lambda", "2.1", "--out", str(out_csv))
    assert code == 0
    fig_dir = tmp_path / "figs"
    code, payload, _ = _run(capsys, "report", "--trace", str(out_csv),
                            "--out-dir", str(fig_dir))
    assert code == 0
    assert payload["figures"]
    for fig in payload["figures"]:
        with open(fig, "rb") as fh:
            assert fh.read(4) == b"\x89PNG"


def test_report_missing_trace(tmp_path, capsys):
    code, _, err = _run(capsys, "report", "--trace", str(tmp_path / "none.csv"))
    assert code == 64
    assert "cannot render report" in err["error"]


def test_version_and_usage(capsys):
    with pytest.raises(SystemExit) as exc_info:
        main(["--version"])
    assert exc_info.value.code == 0
    assert "nonmono" in capsys.readouterr().out
    with pytest.raises(SystemExit) as exc_info:
        main([])
    assert exc_info.value.code == 2

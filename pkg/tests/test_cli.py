import json
import math
import os

import numpy as np
import pytest

from cli import main, parse_args
from database import Database

EPS = math.sqrt(7.0) / 12.0


def coupled_config(require):
    return {
        "d": 1,
        "m": 2,
        "exponent": {"form": "constant", "matrix": [[1.0, 0.0], [0.0, 1.5]]},
        "D": {"form": "constant", "matrix": [[0.25, EPS], [EPS, 0.75]]},
        "field": {"flavor": "two_sided", "phi": {"e": [1.0]}},
        "settings": {"probe_radius_exp": 3, "n_random_probes": 8},
        "require": require,
    }


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check_passes_on_scalar_config(capsys, write_config, scalar_config):
    code, out, _ = run(capsys, "check", "--config", write_config(scalar_config))
    assert code == 0
    report = json.loads(out)
    assert report["verdicts"]["existence"]["passed"]
    assert report["failed"] == []
    assert "limit_hypotheses" in report["verdicts"]


@pytest.mark.parametrize("require, code", [(["C1"], 0), (["existence"], 0), (["C2"], 2), (["C1", "C2"], 2)])
def test_check_exit_code_follows_required_verdicts(capsys, write_config, require, code):
    got, out, _ = run(capsys, "check", "--config", write_config(coupled_config(require)))
    assert got == code
    assert json.loads(out)["require"] == require


def test_unknown_required_verdict(capsys, write_config):
    code, _, err = run(capsys, "check", "--config", write_config(coupled_config(["C7"])))
    assert code == 1
    assert err.startswith("[error] require:")


def test_operational_errors_exit_one(capsys, write_config, tmp_path):
    code, _, err = run(capsys, "check", "--config", write_config(""))
    assert code == 1
    assert "empty" in err
    assert run(capsys, "cf")[0] == 1
    assert run(capsys, "check", "--config", str(tmp_path / "nowhere.json"))[0] == 1


def test_usage_errors_exit_one():
    for argv in (["check", "--seed", "-1"], ["launch"], ["sample", "--small-jumps", "keep"]):
        with pytest.raises(SystemExit) as err:
            parse_args(argv)
        assert err.value.code == 1


def test_seed_accepts_the_full_unsigned_range():
    assert parse_args(["sample", "--seed", str(2 ** 64 - 1)]).seed == 2 ** 64 - 1


def test_norm_of_unit_box(capsys, write_config, scalar_config, tmp_path):
    out_path = tmp_path / "norm.json"
    code, _, _ = run(capsys, "norm", "--config", write_config(scalar_config), "--out", str(out_path))
    assert code == 0
    report = json.loads(out_path.read_text())
    assert report["norm"] == pytest.approx(1.0, rel=1e-5)
    assert abs(report["residual"]) < 1e-3


def test_norm_time_needs_a_field_integrand(capsys, write_config, scalar_config):
    assert run(capsys, "norm", "--config", write_config(scalar_config), "--t", "1.0")[0] == 1


def test_norm_of_field_integrand(capsys, write_config, scalar_config):
    scalar_config["integrand"] = {"kind": "field", "t": [1.0]}
    code, out, _ = run(capsys, "norm", "--config", write_config(scalar_config), "--t", "0.0")
    assert code == 0
    assert json.loads(out)["norm"] == 0.0


def test_sample_with_zero_paths(capsys, write_config, scalar_config, tmp_path):
    csv = tmp_path / "paths.csv"
    code, out, _ = run(capsys, "sample", "--config", write_config(scalar_config), "--out", str(csv),
                       "--n-paths", "0")
    assert code == 0
    assert csv.read_text().strip() == "path,t_index,component,value"
    files = json.loads(out)
    assert os.path.exists(files["binary"])
    with open(files["sidecar"]) as fh:
        assert json.load(fh)["shape"] == [0, 3, 1]


def test_sample_is_reproducible(capsys, write_config, scalar_config, tmp_path):
    config = write_config(scalar_config)
    texts = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        assert run(capsys, "sample", "--config", config, "--out", str(path), "--seed", "5")[0] == 0
        texts.append(path.read_text())
    assert texts[0] == texts[1]
    assert len(texts[0].strip().splitlines()) == 1 + 4 * 3


def test_sample_binary_does_not_depend_on_thread_count(capsys, write_config, scalar_config, tmp_path,
                                                        monkeypatch):
    config = write_config(scalar_config)
    blobs = []
    for threads in ("1", "4", "16"):
        monkeypatch.setenv("OPSTABLE_THREADS", threads)
        csv = tmp_path / f"paths_{threads}.csv"
        assert run(capsys, "sample", "--config", config, "--out", str(csv), "--seed", "21",
                   "--n-paths", "24")[0] == 0
        blobs.append((tmp_path / f"paths_{threads}.csv.bin").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]
    assert len(blobs[0]) == 24 * 3 * 8


def test_sample_needs_an_output(capsys, write_config, scalar_config):
    assert run(capsys, "sample", "--config", write_config(scalar_config))[0] == 1


def test_sample_refuses_an_undefined_field(capsys, write_config):
    doc = coupled_config(["existence"])
    doc["D"] = {"form": "constant", "matrix": [[1.5, 0.0], [0.0, 1.5]]}
    code, _, err = run(capsys, "sample", "--config", write_config(doc), "--out", "unused.csv")
    assert code == 2
    assert "existence" in err


def test_cf_points(capsys, write_config, scalar_config):
    code, out, _ = run(capsys, "cf", "--config", write_config(scalar_config))
    assert code == 0
    rows = json.loads(out)["points"]
    assert len(rows) == 2
    assert rows[0]["log_cf"] < 0
    assert rows[0]["cf"] == pytest.approx(math.exp(rows[0]["log_cf"]))
    # constant exponent: psi(2u) = 2^alpha psi(u)
    assert rows[1]["log_cf"] == pytest.approx(2.0 ** 1.5 * rows[0]["log_cf"], rel=1e-7)


def test_tangent_sweep(capsys, write_config, scalar_config):
    code, out, _ = run(capsys, "tangent", "--config", write_config(scalar_config), "--kmax", "3",
                       "--self-similarity")
    assert code == 0
    report = json.loads(out)
    assert report["verdict"] == "converges"
    assert len(report["deviations"]) == 3
    assert report["notes"]["self_similarity"]["passed"]
    assert report["verdicts"]["convergence"]["passed"]


def test_tangent_rejects_an_empty_ladder(capsys, write_config, scalar_config):
    code, _, err = run(capsys, "tangent", "--config", write_config(scalar_config), "--kmax", "0")
    assert code == 1
    assert "k_max" in err


def test_selftest(capsys, tmp_path):
    out_path = tmp_path / "selftest.csv"
    code, out, _ = run(capsys, "selftest", "--check", "cf_closed_forms", "--check", "cf_homogeneity",
                       "--out", str(out_path))
    assert code == 0
    assert "cf_closed_forms" in out
    assert out_path.read_text().startswith("check,passed,detail")


def test_selftest_rejects_a_bad_tolerance(capsys, monkeypatch):
    monkeypatch.setenv("OPSTABLE_TOL", "tight")
    code, _, err = run(capsys, "selftest", "--check", "cf_closed_forms")
    assert code == 1
    assert "OPSTABLE_TOL" in err
    assert run(capsys, "selftest", "--check", "no_such_check")[0] == 1


def test_tolerance_flag_is_scoped_to_the_run(capsys, write_config, scalar_config):
    assert run(capsys, "cf", "--config", write_config(scalar_config), "--tol", "1e-6")[0] == 0
    assert "OPSTABLE_TOL" not in os.environ
    assert run(capsys, "cf", "--config", write_config(scalar_config), "--tol", "0.5")[0] == 1


def test_runs_are_recorded(capsys, write_config, tmp_path):
    ledger = str(tmp_path / "ledger" / "runs.db")
    config = write_config(coupled_config(["C2"]))
    assert run(capsys, "check", "--config", config, "--ledger", ledger, "--seed", "7")[0] == 2
    db = Database(ledger)
    runs = db.get_runs()
    assert len(runs) == 1
    assert runs.loc[0, "command"] == "check"
    assert runs.loc[0, "exit_code"] == 2
    assert runs.loc[0, "seed"] == "7"
    verdicts = db.get_verdicts(int(runs.loc[0, "run_id"]))
    assert not verdicts.set_index("name").loc["C2", "passed"]


def test_pdf_report(capsys, write_config, scalar_config, tmp_path):
    pdf_dir = tmp_path / "reports"
    assert run(capsys, "check", "--config", write_config(scalar_config), "--pdf", str(pdf_dir))[0] == 0
    pdfs = list(pdf_dir.glob("check_*.pdf"))
    assert len(pdfs) == 1
    assert pdfs[0].read_bytes().startswith(b"%PDF")


def test_check_without_field_uses_spectral_bounds(capsys, write_config, scalar_config):
    for key in ("field", "tangent"):
        scalar_config.pop(key)
    code, out, _ = run(capsys, "check", "--config", write_config(scalar_config))
    assert code == 0
    report = json.loads(out)
    assert set(report["verdicts"]) == {"existence"}
    assert report["spectral_bounds"]["a_hat"] == pytest.approx(1.5)
    assert np.isclose(report["verdicts"]["existence"]["margin"], 0.5)

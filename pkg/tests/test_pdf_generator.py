import os

import pytest

from pdf_generator import generate_report_pdf


def sweep_report(k_max):
    ladder = [2.0 ** -k for k in range(1, k_max + 1)]
    return {"command": "tangent", "kind": "field", "u": [0.0], "limit": -1.2, "verdict": "converges",
            "ladder": ladder, "values": [-1.2] * k_max, "deviations": [1e-9] * k_max,
            "hypotheses": {"flags": ["relaxed_bound"]},
            "notes": {"limit_psi_bounds": [0.5, 3.0], "fullness": "w(u) <singular>"},
            "verdicts": {"convergence": {"name": "convergence", "passed": True, "margin": -1e-9}}}


def test_tangent_report(tmp_path):
    path = generate_report_pdf(sweep_report(60), "opstable tangent: model.json", str(tmp_path))
    assert os.path.basename(path).startswith("tangent_")
    with open(path, "rb") as fh:
        assert fh.read(4) == b"%PDF"


def test_check_report(tmp_path):
    report = {"command": "check", "spectral_bounds": {"a_hat": 0.667, "b_hat": 1.0},
              "require": ["C1"], "failed": [],
              "verdicts": {"C1": {"name": "C1", "passed": True, "margin": 0.03},
                           "C2": {"name": "C2", "passed": False, "margin": -0.11}}}
    path = generate_report_pdf(report, "check & <friends>", str(tmp_path / "nested"))
    assert os.path.getsize(path) > 0


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        generate_report_pdf({"command": "check"}, "t", str(blocker / "sub"))

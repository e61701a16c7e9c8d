import json
import math

import numpy as np
import pytest

from fields import FieldSpec, phi_sum_powers
from integrand_space import IntegrandFamily
from levy_cf import SpectralMeasure, log_cf
from operator_core import ExponentFamily
from sampler import SeedSpec
from settings import get_quad_tol
from tangent import (
    ConvergenceReport, TangentSpec, additive_tangent_check, check_limit_hypotheses, convergence_sweep,
    limit_additive_logcf, limit_field_logcf, limit_logcf, limit_measure_logcf,
    mc_tangent_compare, oss_identity_check, rescaled_field_logcf, rescaled_measure_logcf, sweep_verdict,
)


@pytest.fixture
def field_tangent(scalar_spec):
    return TangentSpec("field", [0.0], [[1.0], [-0.5]], times=[[0.5], [1.0]], field_spec=scalar_spec)


def smooth_alpha(s):
    return 1.5 + 0.2 * math.sin(float(np.ravel(s)[0]))


def jump_alpha(s):
    return 1.8 if float(np.ravel(s)[0]) >= 0.3 else 1.2


def bump_alpha(s):
    return 1.2 + 0.3 / (1.0 + float(np.ravel(s)[0]) ** 2)


def additive_tangent(alpha, u=0.3):
    family = ExponentFamily.multistable(alpha)
    return TangentSpec("additive", [u], [[1.0], [-1.0]], times=[[0.5], [1.0]],
                       family=family, sigma=SpectralMeasure.axis(1))


def test_tangent_spec_validation(scalar_spec, axis1):
    family = scalar_spec.family
    with pytest.raises(ValueError):
        TangentSpec("curve", [0.0], [[1.0]], times=[[1.0]], family=family, sigma=axis1)
    with pytest.raises(ValueError):
        TangentSpec("field", [0.0], [[1.0]], times=[[1.0]])
    with pytest.raises(ValueError):
        TangentSpec("additive", [0.0], [[1.0, 0.0]], times=[[1.0]], family=family, sigma=axis1)
    with pytest.raises(ValueError):
        TangentSpec("additive", [0.0], [[1.0], [2.0]], times=[[1.0]], family=family, sigma=axis1)


@pytest.mark.parametrize("deviations, verdict", [
    ([0.0, 0.0, 0.0], "converges"),
    ([1e-1, 1e-2, 1e-3], "converges"),
    ([0.5, 0.5, 0.5], "not_converged"),
    ([0.5, 0.3, 0.2], "inconclusive"),
    ([1e-3, 2e-3, 5e-3], "inconclusive"),
])
def test_sweep_verdict(deviations, verdict):
    assert sweep_verdict(deviations, floor=1e-8) == verdict


def test_sweep_needs_a_ladder(field_tangent):
    with pytest.raises(ValueError):
        convergence_sweep(field_tangent, 0)


def test_constant_field_sweep_converges(field_tangent):
    report = convergence_sweep(field_tangent, 3)
    assert report.verdict == "converges"
    assert len(report.ladder) == 3
    assert max(report.deviations) <= 2.0 * get_quad_tol() * max(1.0, abs(report.limit))
    assert report.limit < 0.0
    assert report.hypotheses["passed"]


def test_constant_field_is_self_similar(field_tangent):
    limit = limit_logcf(field_tangent)
    assert limit == limit_field_logcf(field_tangent)
    assert rescaled_field_logcf(field_tangent, 0.25) == pytest.approx(limit, rel=1e-5)
    assert limit_field_logcf(field_tangent, thetas=[[0.0], [0.0]]) == 0.0


def test_report_to_json(tmp_path):
    report = ConvergenceReport([0.5, 0.25], [np.float64(-1.0), -1.0], [0.0, 0.0], -1.0,
                               {"passed": True}, "converges")
    out = tmp_path / "sweep.json"
    text = report.to_json(out)
    doc = json.loads(out.read_text())
    assert doc == json.loads(text)
    assert doc["verdict"] == "converges"
    assert list(report.to_frame().columns) == ["k", "r", "value", "deviation"]


def test_self_similarity_of_frozen_field(field_tangent):
    result = oss_identity_check(field_tangent, c_values=(1.0, 2.0), n_probes=2)
    assert result["passed"]
    assert result["max_gap"] <= 1e-6


def test_self_similarity_rejects_a_wrong_exponent(field_tangent):
    result = oss_identity_check(field_tangent, c_values=(2.0,), n_probes=2, D=np.eye(1) * 0.9)
    assert not result["passed"]
    assert result["max_gap"] > 1e-2


def test_self_similarity_at_random_scales(field_tangent):
    result = oss_identity_check(field_tangent, c_values=None, n_probes=6, seed=3)
    assert result["passed"]
    cs = result["table"]["c"]
    assert cs.between(0.25, 4.0).all()
    assert cs.nunique() == 6


def test_measure_tangent_of_constant_family(axis1):
    family = ExponentFamily.constant_family(np.eye(1) / 1.5)
    box = IntegrandFamily.indicator([0.0], [1.0], np.eye(1))
    tspec = TangentSpec("measure", [0.2], [[1.0]], fns=[box], family=family, sigma=axis1)
    limit = limit_measure_logcf(tspec)
    assert limit == pytest.approx(log_cf(tspec.limit_law, [1.0]), rel=1e-6)
    assert rescaled_measure_logcf(tspec, 0.25) == pytest.approx(limit, rel=1e-6)


def test_additive_limit_is_the_frozen_law():
    tspec = additive_tangent(smooth_alpha)
    value = limit_additive_logcf(tspec, times=[[1.0]], thetas=[[1.0]])
    assert value == pytest.approx(log_cf(tspec.limit_law, [1.0]), rel=1e-6)


def test_smooth_multistable_hypotheses_hold():
    report = check_limit_hypotheses(additive_tangent(smooth_alpha), k_max=10)
    assert report["chi_trend"] == "vanishing"
    assert report["alpha_trend"] == "vanishing"
    assert report["passed"]


def test_jump_in_alpha_breaks_the_hypotheses():
    report = check_limit_hypotheses(additive_tangent(jump_alpha), k_max=10)
    assert not report["passed"]
    assert "alpha_modulus" in report["flags"]


def test_smooth_multistable_sweep():
    family = ExponentFamily.multistable(smooth_alpha)
    report = additive_tangent_check(lambda s: np.eye(1), [0.3], 8, family, SpectralMeasure.axis(1))
    assert report.deviations[-1] < report.deviations[0]
    assert report.verdict != "not_converged"
    assert report.notes["fullness"].startswith("w(u) is invertible")


def test_levy_process_tangent_is_exact_at_every_scale():
    family = ExponentFamily.constant_family(np.eye(1) / 1.5)
    report = additive_tangent_check(lambda s: np.eye(1), [0.3], 6, family, SpectralMeasure.axis(1))
    assert report.verdict == "converges"
    assert max(report.deviations) <= 2.0 * get_quad_tol() * max(1.0, abs(report.limit))


@pytest.mark.slow
def test_bump_multistable_sweep_at_the_peak():
    family = ExponentFamily.multistable(bump_alpha)
    report = additive_tangent_check(lambda s: np.eye(1), [0.0], 8, family, SpectralMeasure.axis(1))
    tail = report.deviations[2:]
    assert all(b < a for a, b in zip(tail, tail[1:]))
    assert report.deviations[-1] < 1e-2
    assert report.verdict == "converges"


@pytest.mark.slow
def test_jump_in_alpha_leaves_a_deviation_floor():
    family = ExponentFamily.multistable(jump_alpha)
    report = additive_tangent_check(lambda s: np.eye(1), [0.3], 8, family, SpectralMeasure.axis(1),
                                    times=[[-0.5], [1.0]], thetas=[[1.0], [-1.0]])
    assert min(report.deviations[-3:]) > 1e-1
    assert report.verdict != "converges"


@pytest.mark.slow
def test_mc_control_comparison_passes(field_tangent):
    report = mc_tangent_compare(field_tangent, 0.5, 400, seed=SeedSpec(8), n_terms=32, n_points=20,
                                control=True)
    assert report.passed()

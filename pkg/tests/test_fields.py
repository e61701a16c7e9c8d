import math

import numpy as np
import pytest

from errors import AdmissibilityError, CommutationError, ConditionError
from fields import (
    ExponentDiff, FieldSpec, active_branch, admissibility_probe, check_C1, check_C1p, check_C2,
    check_conditions, check_cont, field_integrand, fullness_flag, indicator_integrand, ma_integrand,
    holder_check, majorant_eta, majorant_h, oneside_integrand, phi_positive_part, phi_sum_powers,
    shifted_integrand,
)
from levy_cf import SpectralMeasure
from operator_core import ExponentFamily

EPS = math.sqrt(7.0) / 12.0


def test_sum_of_powers_is_homogeneous():
    phi = phi_sum_powers([1.0, 2.0])
    assert phi.q == pytest.approx(3.0)
    x = np.array([[0.5, -4.0]])
    assert phi(x)[0] == pytest.approx(0.5 + 2.0)
    with pytest.raises(AdmissibilityError):
        phi_sum_powers([0.5])


def test_positive_part_is_not_admissible():
    with pytest.raises(AdmissibilityError):
        phi_positive_part()


def test_admissibility_probe_is_finite():
    ratios = admissibility_probe(phi_sum_powers([1.0]), n_pairs=200)
    assert all(np.isfinite(v) and v >= 0 for v in ratios.values())


def test_coupled_exponents_satisfy_only_C1(coupled_spec):
    c1, c2 = check_C1(coupled_spec), check_C2(coupled_spec)
    assert c1.passed and not c2.passed
    st = coupled_spec.probe_stats(1.0)
    assert float(st["lam_A"].min()) == pytest.approx(-0.75 - EPS, abs=1e-12)
    assert float(st["Lam_A"].max()) == pytest.approx(-0.75 + EPS, abs=1e-12)
    assert c2.details["commute"] is False


def test_commuting_exponents_satisfy_only_C2(commuting_spec):
    assert check_C2(commuting_spec).passed
    assert not check_C1(commuting_spec).passed
    verdicts = check_conditions(commuting_spec)
    assert verdicts["existence"].passed
    assert verdicts["fullness"].passed
    assert set(verdicts) == {"C1", "C2", "fullness", "existence"}


def test_failing_spec_refuses_integrands():
    spec = FieldSpec(ExponentFamily.constant_family(np.diag([1.0, 1.5]), np.diag([1.5, 1.5])),
                     SpectralMeasure.axis(2), "two_sided", phi_sum_powers([1.0]),
                     probes=np.array([[0.0]]))
    verdicts = check_conditions(spec)
    assert not verdicts["existence"].passed
    with pytest.raises(ConditionError):
        ma_integrand(spec, [1.0])


def test_active_branch_prefers_C2(scalar_spec):
    gamma, rho1, rho2 = active_branch(scalar_spec)
    assert gamma == pytest.approx(1.0)
    assert rho1 == pytest.approx(0.6)
    assert rho2 == pytest.approx(0.6)


def test_moving_average_integrand_at_zero_time(scalar_spec):
    assert field_integrand(scalar_spec, [0.0]).is_zero


def test_moving_average_integrand_values(scalar_spec):
    f = ma_integrand(scalar_spec, [1.0])
    mu = 0.6 - 1.0 / 1.5
    s = -2.0
    expected = abs(1.0 - s) ** mu - abs(s) ** mu
    assert f.at([s])[0, 0] == pytest.approx(expected, rel=1e-12)
    assert f.tail_exponent == pytest.approx(mu - 1.0)


def test_shifted_integrand_uses_shifted_exponents(scalar_spec):
    assert np.allclose(shifted_integrand(scalar_spec, [1.0], [3.0]).at([0.5]),
                       ma_integrand(scalar_spec, [1.0]).at([0.5]))


def test_exponent_difference_for_constant_family(scalar_family):
    diff = ExponentDiff(scalar_family, 1.0)
    assert diff.fixed is not None
    S = np.array([[0.0], [1.0]])
    out = diff.terms(S, np.array([2.0, 0.0]), np.array([1.0, 1.0]))
    mu = 0.6 - 1.0 / 1.5
    assert out[0, 0, 0] == pytest.approx(2.0 ** mu - 1.0)
    assert out[1, 0, 0] == pytest.approx(-1.0)


def test_one_sided_integrand(axis1):
    # D - B = -0.2: a in (1, 2) so the continuity condition can hold
    family = ExponentFamily.constant_family(np.eye(1) / 1.8, np.eye(1) * (1.0 / 1.8 - 0.2), d=1)
    spec = FieldSpec(family, axis1, "one_sided", b_plus=1.0, b_minus=0.5, probes=np.array([[0.0]]))
    verdicts = check_conditions(spec)
    assert set(verdicts) == {"C1p", "C2p", "cont", "existence"}
    assert check_C1p(spec).passed
    f = oneside_integrand(spec, [1.0])
    s = -1.0
    expected = 1.0 * (2.0 ** -0.2 - 1.0)
    assert f.at([s])[0, 0] == pytest.approx(expected, rel=1e-12)
    s = 2.0
    expected = 0.5 * (1.0 - 2.0 ** -0.2)
    assert f.at([s])[0, 0] == pytest.approx(expected, rel=1e-12)
    assert check_cont(spec).details["a"] == pytest.approx(1.8)


def test_one_sided_needs_d_one():
    family = ExponentFamily.constant_family(np.eye(1), np.eye(1) * 0.5, d=2)
    with pytest.raises(ValueError):
        FieldSpec(family, SpectralMeasure.axis(1), "one_sided")


def test_indicator_integrand_sign_and_support():
    f = indicator_integrand(lambda s: np.eye(1) * 2.0, -1.0)
    assert f.at([-0.5])[0, 0] == pytest.approx(-2.0)
    assert f.at([0.5])[0, 0] == 0.0
    assert indicator_integrand(lambda s: np.eye(1), 0.0).is_zero


def test_indicator_weight_must_commute():
    family = ExponentFamily.constant_family(np.diag([1.0, 1.5]), d=1)
    w = lambda s: np.array([[1.0, 0.3], [0.3, 1.0]])
    with pytest.raises(CommutationError):
        indicator_integrand(w, 1.0, family)
    spec = FieldSpec(family, SpectralMeasure.axis(2), "indicator", weight=w, probes=np.array([[0.0]]))
    assert not check_conditions(spec)["existence"].passed


def test_fullness_flag_detects_singular_exponent(axis1):
    family = ExponentFamily.constant_family(np.eye(1) / 1.5, np.eye(1) / 1.5, d=1)
    spec = FieldSpec(family, axis1, "two_sided", phi_sum_powers([1.0]), probes=np.array([[0.0]]))
    assert not fullness_flag(spec)


def test_majorant_eta_is_dyadic(scalar_spec):
    eta = majorant_eta(scalar_spec, [1.0], c6=1.0)
    assert eta >= 1.0
    assert np.log2(eta) == int(np.log2(eta))


def test_majorant_vanishes_at_the_singular_points(scalar_spec):
    h = majorant_h(scalar_spec, 0.5, 1.0, [1.0], np.array([[0.0], [1.0], [0.25], [3.0]]))
    assert h[0] == 0.0 and h[1] == 0.0
    assert np.all(h[2:] > 0)
    with pytest.raises(ValueError):
        majorant_h(scalar_spec, 0.0, 1.0, [1.0], [0.5])


def test_holder_check_rejects_bad_pairs(scalar_spec):
    with pytest.raises(ValueError, match="outside"):
        holder_check(scalar_spec, K=1.0, t_pairs=[([0.0], [2.0]), ([0.0], [0.5])])
    with pytest.raises(ValueError, match="two distinct"):
        holder_check(scalar_spec, t_pairs=[([0.0], [0.0]), ([0.0], [0.5])])

import math

import numpy as np
import pytest

import integrand_space
from errors import ConvergenceError, NotIntegrableError
from integrand_space import (
    BaseMeasure, H, IntegrandFamily, check_diagonalized, check_Fab, control_integral,
    control_measure_density, cube_sup_tau, fab_integral, is_integrable, lower_index, norm_M,
)
from levy_cf import PointLaw, SpectralMeasure
from operator_core import ExponentFamily


@pytest.fixture
def family13():
    return ExponentFamily.constant_family(np.eye(1) / 1.3, declared_a=1.3, declared_b=1.3)


@pytest.fixture
def unit_box():
    return IntegrandFamily.indicator([0.0], [1.0], np.eye(1))


def decaying_diagonal(tie):
    """diag(|s|^{-p(s)}, |s|^{-3}) beyond |s| = 1 with p(s) = 1.5 (1 + e^{-|s|})."""
    def fn(s):
        r = abs(float(s[0]))
        if r <= 1.0:
            return np.zeros((2, 2))
        p = 1.5 * (1.0 + math.exp(-r))
        return np.diag([r ** -p, r ** -p if tie else r ** -3.0])

    return IntegrandFamily(d=1, m=2, fn=fn, tail_exponent=-1.5, null_points=np.array([[-1.0], [1.0]]))


@pytest.fixture
def varying_family():
    return ExponentFamily(d=1, m=2, B=lambda s: np.diag([1.0 + math.exp(-abs(float(s[0]))), 2.0]),
                          declared_a=0.5, declared_b=1.0)


def test_indicator_closed_form(family13, unit_box):
    # H(1_[0,1], lambda) = lambda^{-1.3}
    assert H(unit_box, family13, lam=2.0) == pytest.approx(2.0 ** -1.3, rel=1e-8)
    assert norm_M(unit_box, family13) == pytest.approx(1.0, rel=1e-5)


def test_norm_scales_with_the_integrand(family13, unit_box):
    assert norm_M(unit_box.scaled(2.0), family13) == pytest.approx(2.0, rel=1e-5)


def test_zero_integrand(family13):
    zero = IntegrandFamily.zero(1, 1)
    assert norm_M(zero, family13) == 0.0
    assert H(zero, family13, lam=0.5) == 0.0


def test_scaling_by_zero_gives_the_zero_integrand(family13, unit_box):
    f = unit_box.scaled(0.0)
    assert f.is_zero
    assert norm_M(f, family13) == 0.0


def test_integrand_algebra():
    f = IntegrandFamily.indicator([0.0], [1.0], np.eye(1))
    g = IntegrandFamily.indicator([0.5], [2.0], 2.0 * np.eye(1))
    total = f + g
    assert total.support_radius == 2.0
    assert total.at([0.75])[0, 0] == pytest.approx(3.0)
    assert total.at([1.5])[0, 0] == pytest.approx(2.0)
    assert (f + IntegrandFamily.zero(1, 1)) is f
    with pytest.raises(ValueError):
        f + IntegrandFamily.zero(1, 2)
    with pytest.raises(ValueError):
        IntegrandFamily.indicator([1.0], [0.0], np.eye(1))


def test_base_measure_weight(family13, unit_box):
    base = BaseMeasure(1, weight=lambda S: np.full(S.shape[0], 2.0))
    assert H(unit_box, family13, base, 1.0) == pytest.approx(2.0, rel=1e-8)
    with pytest.raises(ValueError):
        BaseMeasure(1, weight=lambda S: -np.ones(S.shape[0])).density(np.zeros((3, 1)))


def test_fab_is_stricter_than_diagonalized(varying_family):
    f = decaying_diagonal(False)
    assert not check_Fab(f, a=0.5, b=1.0)
    ok, report = check_diagonalized(f, varying_family)
    assert ok
    assert [r["column"] for r in report] == [0, 1]


def test_diagonal_tie_is_not_integrable(varying_family):
    assert is_integrable(decaying_diagonal(False), varying_family)
    assert not is_integrable(decaying_diagonal(True), varying_family)


def test_norm_of_non_integrable_function_raises(varying_family):
    with pytest.raises(NotIntegrableError):
        norm_M(decaying_diagonal(True), varying_family)


def test_fab_of_indicator(unit_box):
    res = fab_integral(unit_box, a=0.5, b=1.0)
    assert res.value == pytest.approx(2.0, rel=1e-10)
    with pytest.raises(ValueError):
        fab_integral(unit_box, a=1.0, b=0.5)


def test_lower_index(varying_family, family13):
    assert lower_index(varying_family) == 0.5
    assert lower_index(ExponentFamily.constant_family(np.diag([1.0, 1.5]))) == pytest.approx(1.0 / 1.5)


def test_control_measure(unit_box):
    family = ExponentFamily.constant_family(np.eye(1) / 1.5)
    sigma = SpectralMeasure.axis(1)
    assert control_measure_density(family, sigma, [0.3]) == pytest.approx(8.0, rel=1e-12)
    assert control_integral(unit_box, family, sigma) == pytest.approx(8.0, rel=1e-5)
    assert control_integral(IntegrandFamily.zero(1, 1), family, sigma) == 0.0


def test_cube_sup_of_a_scalar_law():
    law = PointLaw(np.eye(1) / 1.5, SpectralMeasure.axis(1))
    assert cube_sup_tau(law, [[1.0]], 2.0) == pytest.approx(2.0 ** -1.5, rel=1e-9)
    assert cube_sup_tau(law, [[0.5]], 2.0) == pytest.approx(0.25 ** 1.5, rel=1e-9)
    with pytest.raises(ValueError):
        cube_sup_tau(law, np.eye(2), 1.0)


def test_failed_norm_postcheck_raises(family13, unit_box, monkeypatch):
    monkeypatch.setattr(integrand_space, "NORM_POSTCHECK", -1.0)
    with pytest.raises(ConvergenceError) as err:
        norm_M(unit_box.scaled(2.0), family13)
    assert abs(err.value.residual) < 1e-3

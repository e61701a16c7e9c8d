# acceptance.py - bundled acceptance corpus run by `opstable selftest`
import math
import logging
from typing import Callable, Dict, Tuple

import numpy as np
import pandas as pd

from fields import FieldSpec, check_C1, check_C2, phi_sum_powers
from integrand_space import IntegrandFamily, is_integrable, norm_M
from levy_cf import PointLaw, SpectralMeasure, log_cf, stable_constant
from operator_core import ExponentFamily, matrix_power
from polar import tau, tau_envelope
from sampler import CellPartition, SeedSpec, cell_draws, independence_gof, law_gof, standard_draws
from settings import CELL_N_TERMS, get_quad_tol
from tangent import TangentSpec, additive_tangent_check, convergence_sweep, oss_identity_check

logger = logging.getLogger(__name__)

CheckRunner = Callable[[], Tuple[bool, str]]


def _random_exponent(rng, m):
    Q, _ = np.linalg.qr(rng.normal(size=(m, m)))
    return (Q * rng.uniform(0.5, 2.0, m)) @ Q.T


# ---------- CHECKS ----------

def check_polar_homogeneity(n=10 ** 4, seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        m = int(rng.integers(1, 4))
        D = _random_exponent(rng, m)
        x = rng.normal(size=m)
        r = 10.0 ** rng.uniform(-3, 3)
        t = tau(D, x)
        worst = max(worst, abs(tau(D, matrix_power(D, r) @ x) - r * t) / (r * t))
    return worst <= 1e-8, f"max relative error {worst:.3e}"


def check_envelope(n=10 ** 4, seed=2):
    rng = np.random.default_rng(seed)
    misses = 0
    for _ in range(n):
        m = int(rng.integers(1, 4))
        D = _random_exponent(rng, m)
        x = rng.normal(size=m) * 10.0 ** rng.uniform(-3, 3)
        lo, hi = tau_envelope(D, x, 0.5, 1.9, 1.0)
        t = tau(D, x)
        if not (lo * (1 - 1e-12) <= t <= hi * (1 + 1e-12)):
            misses += 1
    return misses == 0, f"{misses} of {n} outside the envelope"


def check_cf_closed_forms():
    sigma = SpectralMeasure.from_atoms([([1.0], 0.7), ([-1.0], 0.7)])
    law = PointLaw(np.eye(1), sigma)
    worst = abs(log_cf(law, [2.0]) + math.pi * 0.7 * 2.0) / (math.pi * 1.4)
    for alpha in (0.8, 1.5, 1.9):
        law = PointLaw(np.eye(1) / alpha, sigma)
        ratios = [log_cf(law, [u]) / -abs(u) ** alpha for u in (0.5, 1.0, 2.0, 4.0)]
        target = 1.4 * stable_constant(alpha)
        worst = max(worst, max(abs(r - target) / target for r in ratios))
    return worst <= 1e-7, f"max relative error {worst:.3e}"


def check_cf_homogeneity(n=10, seed=3):
    rng = np.random.default_rng(seed)
    atoms = [([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0), ([0.6, 0.8], 0.5), ([-0.6, -0.8], 0.5)]
    sigma = SpectralMeasure.from_atoms(atoms)
    worst = 0.0
    for _ in range(n):
        B = np.diag(rng.uniform(0.55, 1.9, 2))
        law = PointLaw(B, sigma)
        u = rng.normal(size=2)
        t = 10.0 ** rng.uniform(-1, 1)
        base = log_cf(law, u)
        worst = max(worst, abs(log_cf(law, matrix_power(B, t) @ u) - t * base) / abs(t * base))
    return worst <= 1e-7, f"max relative error {worst:.3e}"


def check_indicator_norm():
    family = ExponentFamily.constant_family(np.eye(1) / 1.3, declared_a=1.3, declared_b=1.3)
    f = IntegrandFamily.indicator([0.0], [1.0], np.eye(1))
    value = norm_M(f, family)
    return abs(value - 1.0) <= 1e-6, f"||1_[0,1]||_M = {value:.9f}"


def _diagonal_power_case(tie):
    def fn(s):
        r = abs(float(s[0]))
        if r <= 1.0:
            return np.zeros((2, 2))
        p1 = 1.5 * (1.0 + math.exp(-r))
        return np.diag([r ** -p1, r ** -p1 if tie else r ** -3.0])

    return IntegrandFamily(d=1, m=2, fn=fn, tail_exponent=-1.5, null_points=np.array([[-1.0], [1.0]]))


def check_example_integrability():
    family = ExponentFamily(d=1, m=2, B=lambda s: np.diag([1.0 + math.exp(-abs(float(s[0]))), 2.0]),
                            declared_a=0.5, declared_b=1.0)
    f_ok = is_integrable(_diagonal_power_case(False), family)
    g_ok = is_integrable(_diagonal_power_case(True), family)
    return f_ok and not g_ok, f"diagonal f integrable={f_ok}, tied g integrable={g_ok}"


def _field(B, D):
    family = ExponentFamily.constant_family(B, D, d=1)
    return FieldSpec(family, SpectralMeasure.axis(2), "two_sided", phi_sum_powers([1.0]))


def check_example_conditions():
    eps = math.sqrt(7.0) / 12.0
    spec_a = _field(0.5 * np.diag([2.0, 3.0]), 0.25 * np.array([[1.0, 4 * eps], [4 * eps, 3.0]]))
    c1a, c2a = check_C1(spec_a), check_C2(spec_a)
    lam = spec_a.probe_stats(1.0)
    spread = max(abs(float(lam["lam_A"].min()) - (-0.75 - eps)), abs(float(lam["Lam_A"].max()) - (-0.75 + eps)))
    spec_b = _field(np.diag([1.0, 1.5]), np.diag([0.25, 0.25]))
    c1b, c2b = check_C1(spec_b), check_C2(spec_b)
    ok = c1a.passed and not c2a.passed and spread <= 1e-12 and c2b.passed and not c1b.passed
    return ok, (f"(a) C1={c1a.passed} C2={c2a.passed} eigen error {spread:.1e}; "
                f"(b) C1={c1b.passed} C2={c2b.passed}")


def _constant_tangent():
    family = ExponentFamily.constant_family(np.eye(1) / 1.5, np.eye(1) * 0.6, d=1)
    spec = FieldSpec(family, SpectralMeasure.axis(1), "two_sided", phi_sum_powers([1.0]),
                     probes=np.array([[0.0], [1.0]]))
    return TangentSpec("field", [0.0], [[1.0], [-0.5]], times=[[0.5], [1.0]], field_spec=spec)


def check_constant_sweep():
    report = convergence_sweep(_constant_tangent(), 3)
    worst = max(report.deviations)
    ok = report.verdict == "converges" and worst <= 2.0 * get_quad_tol() * max(1.0, abs(report.limit))
    return ok, f"verdict {report.verdict}, max deviation {worst:.3e}"


def check_self_similarity(n_probes=100, n_control=10):
    tspec = _constant_tangent()
    result = oss_identity_check(tspec, c_values=None, n_probes=n_probes)
    control = oss_identity_check(tspec, c_values=None, n_probes=n_control, seed=1, D=np.eye(1) * 0.9)
    ok = result["passed"] and control["max_gap"] > 1e-2
    return ok, f"max relative gap {result['max_gap']:.3e}, wrong-D gap {control['max_gap']:.3e}"


def check_sampler_gof(n=10 ** 5, seed=3):
    B = np.diag([0.6, 0.8])
    sigma = SpectralMeasure.axis(2)
    draws = standard_draws(PointLaw(B, sigma), n, seed=SeedSpec(seed))
    true = law_gof(PointLaw(B, sigma), draws)
    wrong = law_gof(PointLaw(np.diag(1.0 / (1.0 / np.diag(B) + 0.2)), sigma), draws)
    ok = true.passed() and wrong.n_fail >= 10
    return ok, f"{true.n_fail} of 50 points fail, perturbed exponent fails {wrong.n_fail}"


def check_independence_scaling(n=4000, seed=12):
    family = ExponentFamily.constant_family(np.eye(1) / 1.5)
    sigma = SpectralMeasure.axis(1)
    law = PointLaw(np.eye(1) / 1.5, sigma)
    pairs = [([1.0], [1.0]), ([0.5], [-1.0]), ([2.0], [0.3]), ([0.8], [0.8])]
    two = cell_draws(family, sigma, CellPartition.grid([0.0], [2.0], 2), n, CELL_N_TERMS, SeedSpec(seed))
    one = cell_draws(family, sigma, CellPartition.grid([0.0], [2.0], 1), n, CELL_N_TERMS, SeedSpec(seed + 1))
    independent = independence_gof(two[:, 0, :], two[:, 1, :], pairs)
    summed = law_gof(law, two.sum(axis=1), n_points=20, scale=2.0)
    single = law_gof(law, one[:, 0, :], n_points=20, scale=2.0)
    ok = independent.passed(max_failures=0) and summed.passed() and single.passed()
    return ok, (f"max factorization gap {independent.table['gap'].max():.3e} "
                f"(threshold {independent.threshold:.3e}); scaling failures {summed.n_fail} and {single.n_fail}")


def _additive_sweep(alpha, u, k_max, times=None, thetas=None):
    family = ExponentFamily.multistable(alpha)
    return additive_tangent_check(lambda s: np.eye(1), [u], k_max, family, SpectralMeasure.axis(1),
                                  times=times, thetas=thetas)


def check_multistable_sweep():
    report = _additive_sweep(lambda s: 1.2 + 0.3 / (1.0 + float(np.ravel(s)[0]) ** 2), 0.0, 8)
    tail = report.deviations[2:]
    ok = all(b < a for a, b in zip(tail, tail[1:])) and report.deviations[-1] < 1e-2
    return ok, f"deviations {report.deviations[0]:.3e} to {report.deviations[-1]:.3e}, {report.verdict}"


def check_jump_sweep():
    report = _additive_sweep(lambda s: 1.8 if float(np.ravel(s)[0]) >= 0.3 else 1.2, 0.3, 8,
                             times=[[-0.5], [1.0]], thetas=[[1.0], [-1.0]])
    floor = min(report.deviations[-3:])
    return floor > 1e-1, f"deviation floor {floor:.3e}, {report.verdict}"


def check_levy_process_sweep():
    family = ExponentFamily.constant_family(np.eye(1) / 1.5)
    report = additive_tangent_check(lambda s: np.eye(1), [0.3], 8, family, SpectralMeasure.axis(1))
    worst = max(report.deviations)
    ok = worst <= 2.0 * get_quad_tol() * max(1.0, abs(report.limit))
    return ok, f"max deviation {worst:.3e}"


# Monte Carlo checks, skipped by a quick selftest
SAMPLING_CHECKS = ("sampler_gof", "independence_scaling")


def selftest_runners() -> Dict[str, CheckRunner]:
    return {
        "polar_homogeneity": check_polar_homogeneity,
        "envelope_containment": check_envelope,
        "cf_closed_forms": check_cf_closed_forms,
        "cf_homogeneity": check_cf_homogeneity,
        "indicator_norm": check_indicator_norm,
        "integrability_examples": check_example_integrability,
        "condition_examples": check_example_conditions,
        "sampler_gof": check_sampler_gof,
        "independence_scaling": check_independence_scaling,
        "constant_tangent_sweep": check_constant_sweep,
        "multistable_sweep": check_multistable_sweep,
        "jump_sweep": check_jump_sweep,
        "levy_process_sweep": check_levy_process_sweep,
        "self_similarity": check_self_similarity,
    }


def run_selftest(names=None, quick=False):
    """Run the corpus and return a table with columns check, passed, detail."""
    get_quad_tol()
    runners = selftest_runners()
    if names is None:
        names = [name for name in runners if not (quick and name in SAMPLING_CHECKS)]
    rows = []
    for name in names:
        if name not in runners:
            raise ValueError(f"unknown selftest check {name!r}")
        try:
            passed, detail = runners[name]()
        except Exception as e:
            logger.error(f"selftest {name} raised: {str(e)}")
            passed, detail = False, f"error: {str(e)}"
        logger.info(f"selftest {name}: {'pass' if passed else 'FAIL'} ({detail})")
        rows.append({"check": name, "passed": bool(passed), "detail": detail})
    return pd.DataFrame(rows)

# fields.py - moving-average field integrands, existence conditions and path diagnostics
import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd

from errors import AdmissibilityError, CommutationError, ConditionError
from integrand_space import IntegrandFamily, cube_sup_rows, fab_integral, norm_M
from levy_cf import sphere_directions
from operator_core import (
    as_symmetric, commutator_defect, eigendecompose, eig_power,
    make_probes, spectral_bounds,
)
from polar import power_constants, tau_batch
from settings import COMMUTE_TOL, PROBE_RADIUS_EXP, N_RANDOM_PROBES

logger = logging.getLogger(__name__)

FLAVORS = ("two_sided", "one_sided", "indicator")
DET_TOL = 1e-12


# ---------- HOMOGENEOUS FUNCTIONS ----------

@dataclass
class HomogeneousFn:
    """E-homogeneous phi: R^d -> [0, inf), phi(r^E x) = r phi(x)."""
    E: np.ndarray
    fn: Callable
    beta: float = 1.0
    name: str = "phi"
    m_phi: float = field(default=None)
    M_phi: float = field(default=None)

    def __post_init__(self):
        self.E = as_symmetric(self.E)
        self.eig = eigendecompose(self.E)
        if self.eig.spectrum[0] <= 0:
            raise AdmissibilityError(f"E must have positive spectrum, got {self.eig.spectrum.tolist()}")
        if self.m_phi is None or self.M_phi is None:
            values = self(unit_sphere(self.eig, 2000))
            self.m_phi, self.M_phi = float(values.min()), float(values.max())
        if self.m_phi <= 0:
            raise AdmissibilityError(f"{self.name} vanishes on the unit sphere of tau_E (min {self.m_phi:.3g})")
        self._check_homogeneity()

    @property
    def d(self):
        return self.E.shape[0]

    @property
    def q(self):
        return float(np.trace(self.E))

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d and X.shape[0] == self.d and self.d > 1:
            X = X.T
        return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])

    def _check_homogeneity(self, n=64, seed=7):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, self.d))
        r = np.exp(rng.uniform(-2.0, 2.0, size=n))
        scaled = np.array([eig_power(self.eig, ri) @ x for ri, x in zip(r, X)])
        lhs, rhs = self(scaled), r * self(X)
        err = float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))
        if err > 1e-8:
            raise AdmissibilityError(f"{self.name} is not E-homogeneous (relative error {err:.2e})")

    def tau(self, X):
        return tau_batch(self.eig, np.atleast_2d(X))


def unit_sphere(eig, n):
    """Points l with tau_E(l) = 1."""
    d = eig.spectrum.size
    X = sphere_directions(d, n)
    r = tau_batch(eig, X)
    Y = (X @ eig.basis) * r[:, None] ** (-eig.spectrum)
    return Y @ eig.basis.T


def phi_sum_powers(e):
    """phi(x) = sum_j |x_j|^{1/e_j} with E = diag(e), beta = 1."""
    e = np.atleast_1d(np.asarray(e, dtype=float))
    if np.any(e < 1.0):
        raise AdmissibilityError(f"sum-of-powers needs every e_j >= 1, got {e.tolist()}")
    inv = 1.0 / e
    return HomogeneousFn(np.diag(e), lambda X: np.sum(np.abs(X) ** inv, axis=1), 1.0,
                         name=f"sum_powers{e.tolist()}")


def phi_positive_part():
    """(x)_+ on R; rejected, it vanishes on the negative half line."""
    return HomogeneousFn(np.eye(1), lambda X: np.maximum(X[:, 0], 0.0), 1.0, name="positive_part")


def admissibility_probe(phi, n_pairs=2000, annuli=((0.5, 1.0), (1.0, 2.0), (2.0, 4.0)), seed=0):
    """max |phi(x+y) - phi(y)| / tau_E(x)^beta over tau_E(x) <= 1 and A <= ||y|| <= B, per annulus."""
    rng = np.random.default_rng(seed)
    d = phi.d
    out = {}
    for A, B in annuli:
        if not (0 < A <= B):
            raise ValueError(f"annulus needs 0 < A <= B, got {(A, B)}")
        theta = unit_sphere(phi.eig, n_pairs)
        r = rng.uniform(0.0, 1.0, size=n_pairs) ** 4
        X = np.array([eig_power(phi.eig, ri) @ th for ri, th in zip(np.maximum(r, 1e-12), theta)])
        dirs = rng.normal(size=(n_pairs, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        Y = dirs * rng.uniform(A, B, size=n_pairs)[:, None]
        tx = phi.tau(X)
        ratio = np.abs(phi(X + Y) - phi(Y)) / tx ** phi.beta
        out[(A, B)] = float(np.max(ratio[tx > 0]))
    return out


# ---------- FIELD MODEL ----------

@dataclass
class Verdict:
    name: str
    passed: bool
    margin: float
    details: dict = field(default_factory=dict)

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "margin": float(self.margin),
                "details": self.details}


@dataclass
class FieldSpec:
    """Moving-average field: integrand flavor, phi, exponents B(s), D(s) and spectral measure."""
    family: object
    sigma: object
    flavor: str = "two_sided"
    phi: Optional[HomogeneousFn] = None
    b_plus: float = 1.0
    b_minus: float = 0.0
    weight: Optional[Callable] = None
    probes: Optional[np.ndarray] = None
    verdicts: dict = field(default_factory=dict)
    _stats: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"flavor must be one of {FLAVORS}, got {self.flavor!r}")
        if self.flavor in ("one_sided", "indicator") and self.family.d != 1:
            raise ValueError(f"{self.flavor} fields need d = 1, got d = {self.family.d}")
        if self.flavor == "two_sided":
            if self.phi is None:
                self.phi = phi_sum_powers(np.ones(self.family.d))
            if self.phi.d != self.family.d:
                raise ValueError(f"phi lives on R^{self.phi.d} but the field on R^{self.family.d}")
        elif self.phi is None:
            self.phi = phi_sum_powers([1.0])
        if self.flavor == "indicator" and self.weight is None:
            eye = np.eye(self.family.m)
            self.weight = lambda s: eye
        if self.probes is None:
            self.probes = make_probes(self.family.d, PROBE_RADIUS_EXP, N_RANDOM_PROBES)

    @property
    def d(self):
        return self.family.d

    @property
    def m(self):
        return self.family.m

    @property
    def q(self):
        return 1.0 if self.flavor == "one_sided" else self.phi.q

    @property
    def beta(self):
        return 1.0 if self.flavor == "one_sided" else self.phi.beta

    def bounds(self):
        if "bounds" not in self._stats:
            sb = spectral_bounds(self.family, self.probes)
            a = self.family.declared_a if self.family.declared_a is not None else sb.a_hat
            b = self.family.declared_b if self.family.declared_b is not None else sb.b_hat
            self._stats["bounds"] = (a, b)
        return self._stats["bounds"]

    def probe_stats(self, q=None):
        """Per-probe spectra of D - qB and D plus the commutator defect of B and D."""
        q = self.q if q is None else q
        key = ("stats", q)
        if key not in self._stats:
            rows = []
            for s in self.probes:
                B, D = self.family.B_at(s), self.family.D_at(s)
                A = eigendecompose(D - q * B).spectrum
                dD = eigendecompose(D).spectrum
                rows.append({"lam_A": A[0], "Lam_A": A[-1], "lam_D": dD[0], "Lam_D": dD[-1],
                             "defect": commutator_defect(B, D),
                             "det_A": float(np.prod(A))})
            self._stats[key] = pd.DataFrame(rows)
        return self._stats[key]


# ---------- CONDITION CHECKS ----------

def _gap_verdict(name, lo, hi, lower, upper, extra=None):
    margin = min(lo - lower, upper - hi)
    details = {"inf_lambda": lo, "sup_Lambda": hi, "lower_bound": lower, "upper_bound": upper}
    details.update(extra or {})
    return Verdict(name, bool(margin > 0), float(margin), details)


def _commuting_verdict(name, spec, upper):
    st = spec.probe_stats()
    lo, hi, defect = float(st["lam_D"].min()), float(st["Lam_D"].max()), float(st["defect"].max())
    v = _gap_verdict(name, lo, hi, 0.0, upper, {"max_commutator_defect": defect})
    if defect > COMMUTE_TOL:
        v.passed = False
        v.margin = min(v.margin, -defect)
        v.details["commute"] = False
    else:
        v.details["commute"] = True
    return v


def check_C1(spec):
    """-q/b < inf lambda_{D-qB} <= sup Lambda_{D-qB} < beta - q/a."""
    a, b = spec.bounds()
    q = spec.q
    st = spec.probe_stats(q)
    return _gap_verdict("C1", float(st["lam_A"].min()), float(st["Lam_A"].max()), -q / b, spec.beta - q / a,
                        {"a": a, "b": b, "q": q})


def check_C2(spec):
    """B D = D B on probes and 0 < inf lambda_D <= sup Lambda_D < beta."""
    return _commuting_verdict("C2", spec, spec.beta)


def _require_one_sided(spec):
    if spec.d != 1:
        raise ValueError("one-sided conditions need d = 1")


def check_C1p(spec):
    """-1/b < inf lambda_{D-B} <= sup Lambda_{D-B} < 1 - 1/a."""
    _require_one_sided(spec)
    a, b = spec.bounds()
    st = spec.probe_stats(1.0)
    return _gap_verdict("C1p", float(st["lam_A"].min()), float(st["Lam_A"].max()), -1.0 / b, 1.0 - 1.0 / a,
                        {"a": a, "b": b})


def check_C2p(spec):
    _require_one_sided(spec)
    return _commuting_verdict("C2p", spec, 1.0)


def check_cont(spec):
    """b/a^2 - 1/a < inf lambda_{D-B} <= sup Lambda_{D-B} < 1 - 1/a, which forces a > 1."""
    _require_one_sided(spec)
    a, b = spec.bounds()
    if a <= 1.0:
        return Verdict("cont", False, a - 1.0, {"a": a, "b": b, "reason": "a <= 1"})
    st = spec.probe_stats(1.0)
    return _gap_verdict("cont", float(st["lam_A"].min()), float(st["Lam_A"].max()),
                        b / a ** 2 - 1.0 / a, 1.0 - 1.0 / a, {"a": a, "b": b})


def check_weight_commutes(spec):
    defect = 0.0
    for s in spec.probes:
        defect = max(defect, commutator_defect(np.atleast_2d(spec.weight(s)), spec.family.B_at(s)))
    return Verdict("commutation", defect <= COMMUTE_TOL, COMMUTE_TOL - defect, {"max_defect": defect})


def fullness_flag(spec, region=None, n=256, seed=0):
    """True when det(D(s) - qB(s)) != 0 on probes of a box (default: the FieldSpec probes)."""
    if region is None:
        probes = spec.probes
    else:
        lo, hi = (np.atleast_1d(np.asarray(x, dtype=float)) for x in region)
        probes = lo + (hi - lo) * np.random.default_rng(seed).uniform(size=(n, lo.size))
    q = spec.q
    ok = 0
    for s in probes:
        A = spec.family.D_at(s) - q * spec.family.B_at(s)
        if abs(float(np.prod(eigendecompose(A).spectrum))) > DET_TOL:
            ok += 1
    logger.debug(f"fullness: {ok} of {len(probes)} probes with invertible D - qB")
    return ok > 0


def check_conditions(spec):
    """Run every check for the flavor and record the verdicts on the FieldSpec."""
    if spec.flavor == "two_sided":
        verdicts = {"C1": check_C1(spec), "C2": check_C2(spec)}
        full = fullness_flag(spec)
        verdicts["fullness"] = Verdict("fullness", full, 1.0 if full else -1.0)
        exist = verdicts["C1"].passed or verdicts["C2"].passed
        margin = max(verdicts["C1"].margin, verdicts["C2"].margin)
    elif spec.flavor == "one_sided":
        verdicts = {"C1p": check_C1p(spec), "C2p": check_C2p(spec), "cont": check_cont(spec)}
        exist = verdicts["C1p"].passed or verdicts["C2p"].passed
        margin = max(verdicts["C1p"].margin, verdicts["C2p"].margin)
    else:
        verdicts = {"commutation": check_weight_commutes(spec)}
        exist = verdicts["commutation"].passed
        margin = verdicts["commutation"].margin
    verdicts["existence"] = Verdict("existence", exist, margin)
    spec.verdicts = verdicts
    return verdicts


def active_branch(spec):
    """(A-shift gamma, rho1, rho2) from the passing condition; C2 wins when both pass."""
    verdicts = spec.verdicts or check_conditions(spec)
    names = ("C2", "C1") if spec.flavor == "two_sided" else ("C2p", "C1p")
    q = spec.q
    for name in names:
        v = verdicts[name]
        if v.passed:
            if name.startswith("C2"):
                st = spec.probe_stats(q)
                return q, float(st["lam_D"].min()), float(st["Lam_D"].max())
            return 0.0, v.details["inf_lambda"], v.details["sup_Lambda"]
    raise ConditionError([verdicts[n] for n in names])


# ---------- INTEGRANDS ----------

def _powers(mu, p):
    """p^mu row-wise with 0^E = 0."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(p[:, None] > 0, p[:, None] ** mu, 0.0)


class ExponentDiff:
    """s -> eigendecomposition of D(s) - q B(s), fixed for constant families."""

    def __init__(self, family, q):
        self.family = family
        self.q = q
        self.fixed = None
        if family.constant:
            s0 = np.zeros(family.d)
            self.fixed = eigendecompose(family.D_at(s0) - q * family.B_at(s0))

    def at(self, s):
        if self.fixed is not None:
            return self.fixed
        return eigendecompose(self.family.D_at(s) - self.q * self.family.B_at(s))

    def terms(self, S, p1, p0):
        """p1(s)^{M(s)} - p0(s)^{M(s)} for every row s of S."""
        if self.fixed is not None:
            O, mu = self.fixed.basis, self.fixed.spectrum
            P = _powers(mu, p1) - _powers(mu, p0)
            return np.einsum("ij,nj,kj->nik", O, P, O)
        out = np.empty((S.shape[0], self.family.m, self.family.m))
        for i, s in enumerate(S):
            eig = self.at(s)
            P = _powers(eig.spectrum, np.array([p1[i], p0[i]]))
            out[i] = (eig.basis * (P[0] - P[1])) @ eig.basis.T
        return out


def _tail_hints(spec):
    a, _ = spec.bounds()
    gamma, _, rho2 = active_branch(spec)
    st = spec.probe_stats(spec.q)
    tail = float(st["Lam_A"].max()) - spec.beta
    h_tail = a * (rho2 - spec.beta) - gamma
    return tail, h_tail


def _as_t(spec, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.size != spec.d:
        raise ValueError(f"t must have {spec.d} coordinates, got {t.size}")
    return t


def shifted_integrand(spec, t, t0=None):
    """g(t, t0, s) = phi(t-s)^{M(s+t0)} - phi(-s)^{M(s+t0)} with M = D - qB."""
    t = _as_t(spec, t)
    t0 = np.zeros(spec.d) if t0 is None else _as_t(spec, t0)
    if not np.any(t):
        return IntegrandFamily.zero(spec.d, spec.m)
    exps = ExponentDiff(spec.family, spec.q)
    phi = spec.phi

    def batch(S):
        return exps.terms(S + t0, phi(t - S), phi(-S))

    tail, h_tail = _tail_hints(spec)
    return IntegrandFamily(d=spec.d, m=spec.m, batch=batch, tail_exponent=tail, h_tail_exponent=h_tail,
                           null_points=np.vstack([np.zeros(spec.d), t]),
                           tail_scale=float(phi.eig.spectrum[-1]))


def ma_integrand(spec, t):
    """f(t, s) = phi(t-s)^{D(s)-qB(s)} - phi(-s)^{D(s)-qB(s)}; rejects specs failing C1 and C2."""
    if spec.flavor != "two_sided":
        raise ValueError(f"ma_integrand needs a two-sided spec, got {spec.flavor}")
    active_branch(spec)
    return shifted_integrand(spec, t)


def oneside_integrand(spec, t, b_plus=None, b_minus=None):
    """b+ ((t-s)_+^{D-B} - (-s)_+^{D-B}) + b- ((t-s)_-^{D-B} - (-s)_-^{D-B}) with 0^E = 0."""
    if spec.d != 1:
        raise ValueError("one-sided integrands need d = 1")
    bp = spec.b_plus if b_plus is None else float(b_plus)
    bm = spec.b_minus if b_minus is None else float(b_minus)
    t = float(_as_t(spec, t)[0])
    if t == 0.0 or (bp == 0.0 and bm == 0.0):
        return IntegrandFamily.zero(1, spec.m)
    active_branch(spec)
    exps = ExponentDiff(spec.family, 1.0)

    def batch(S):
        s = S[:, 0]
        out = np.zeros((S.shape[0], spec.m, spec.m))
        if bp:
            out += bp * exps.terms(S, np.maximum(t - s, 0.0), np.maximum(-s, 0.0))
        if bm:
            out += bm * exps.terms(S, np.maximum(s - t, 0.0), np.maximum(s, 0.0))
        return out

    tail, h_tail = _tail_hints(spec)
    return IntegrandFamily(d=1, m=spec.m, batch=batch, tail_exponent=tail, h_tail_exponent=h_tail,
                           null_points=np.array([[0.0], [t]]))


def indicator_integrand(w, t, family=None, probes=None):
    """1_{[0,t]}(s) w(s), with 1_{[0,t]} = -1_{[t,0]} for t < 0."""
    t = float(np.atleast_1d(t)[0])
    if family is not None:
        m = family.m
    else:
        m = np.atleast_2d(w(np.zeros(1))).shape[0]
    if t == 0.0:
        return IntegrandFamily.zero(1, m)
    lo, hi = min(0.0, t), max(0.0, t)
    if family is not None:
        pts = np.linspace(lo, hi, 33)[:, None] if probes is None else np.atleast_2d(probes)
        defect = max(commutator_defect(np.atleast_2d(w(s)), family.B_at(s)) for s in pts)
        if defect > COMMUTE_TOL:
            raise CommutationError("weight w(s) does not commute with B(s)", defect)
    sign = 1.0 if t > 0 else -1.0

    def batch(S):
        s = S[:, 0]
        inside = (s >= lo) & (s <= hi)
        out = np.zeros((S.shape[0], m, m))
        for i in np.flatnonzero(inside):
            out[i] = sign * np.atleast_2d(w(S[i]))
        return out

    reach = max(abs(lo), abs(hi))
    return IntegrandFamily(d=1, m=m, batch=batch, support_radius=2.0 ** math.ceil(math.log2(reach)),
                           null_points=np.array([[lo], [hi]]))


def field_integrand(spec, t):
    if spec.flavor == "two_sided":
        return ma_integrand(spec, t)
    if spec.flavor == "one_sided":
        return oneside_integrand(spec, t)
    return indicator_integrand(spec.weight, t, spec.family)


# ---------- MAJORANT ----------

def _quasi_triangle(spec):
    lam_E = float(spec.phi.eig.spectrum[0])
    return power_constants(spec.d, 1.0 / lam_E)[1]


def majorant_eta(spec, t, c6=None):
    """Smallest dyadic eta with phi(s)^{-1} tau(t) < 1, C6 tau(t)^beta phi(-s)^{-beta} < 1/2
    and phi(-s) > 1 whenever tau(s) > eta."""
    t = _as_t(spec, t)
    tau_t = float(spec.phi.tau(t[None, :])[0])
    if c6 is None:
        c6 = max(admissibility_probe(spec.phi, 500, annuli=((0.5, 2.0),)).values())
    floor = spec.phi.m_phi
    eta = 1.0
    for _ in range(200):
        low = floor * eta
        if low > tau_t and low > 1.0 and c6 * tau_t ** spec.beta * low ** (-spec.beta) < 0.5:
            return eta
        eta *= 2.0
    raise ValueError(f"no admissible eta found for tau(t) = {tau_t}")


def majorant_h(spec, eta, zeta, t, s):
    """Three-term majorant: local powers around s = 0 and s = t plus the tail power."""
    if eta <= 0 or zeta <= 0:
        raise ValueError(f"need eta, zeta > 0, got {eta}, {zeta}")
    t = _as_t(spec, t)
    S = np.atleast_2d(np.asarray(s, dtype=float))
    if S.shape[1] != spec.d:
        S = S.reshape(-1, spec.d)
    a, b = spec.bounds()
    gamma, rho1, rho2 = active_branch(spec)
    beta = spec.beta
    c4 = _quasi_triangle(spec)
    reach = c4 * (zeta + eta)
    ts = spec.phi.tau(S)
    tts = spec.phi.tau(t[None, :] - S)
    tau_t = float(spec.phi.tau(t[None, :])[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        near0 = np.where((ts <= reach) & (ts > 0), ts ** (a * rho1 - gamma) + ts ** (b * rho1 - gamma), 0.0)
        near_t = np.where((tts <= reach) & (tts > 0), tts ** (a * rho1 - gamma) + tts ** (b * rho1 - gamma), 0.0)
        far = np.where(ts > eta, max(tau_t ** (a * beta), tau_t ** (b * beta)) * ts ** (a * (rho2 - beta) - gamma), 0.0)
    h = near0 + near_t + far
    h[(ts == 0) | (tts == 0)] = 0.0
    return h if np.ndim(s) > 1 else float(h[0])


def majorant_ratio(spec, t, S, lam=1.0, t0=None, eta=None):
    """max over S of the cube sup of g(t, t0, s) divided by h(t, s)."""
    t = _as_t(spec, t)
    t0 = np.zeros(spec.d) if t0 is None else _as_t(spec, t0)
    S = np.atleast_2d(np.asarray(S, dtype=float))
    zeta = max(float(spec.phi.tau(t[None, :])[0]), 1e-12)
    eta = majorant_eta(spec, t) if eta is None else eta
    g = shifted_integrand(spec, t, t0)
    G = g.evaluate(S)
    eigs = [spec.family.eig_B(s + t0) for s in S]
    O = np.stack([e.basis for e in eigs])
    LAM = np.stack([e.spectrum for e in eigs])
    sup, _ = cube_sup_rows(G @ O, LAM, lam)
    h = majorant_h(spec, eta, zeta, t, S)
    mask = h > 0
    return float(np.max(sup[mask] / h[mask])) if np.any(mask) else 0.0


# ---------- PATH DIAGNOSTICS ----------

def holder_check(spec, K=1.0, t_pairs=None):
    """Slope of log ||f(t1,.) - f(t2,.)||_M against log |t1 - t2| over dyadic pairs."""
    a, b = spec.bounds()
    if t_pairs is None:
        t_pairs = [(np.zeros(spec.d), np.full(spec.d, K * 2.0 ** -k)) for k in range(1, 7)]
    rows = []
    for t1, t2 in t_pairs:
        t1, t2 = _as_t(spec, t1), _as_t(spec, t2)
        if np.any(np.abs(t1) > K) or np.any(np.abs(t2) > K):
            raise ValueError(f"pair ({t1.tolist()}, {t2.tolist()}) outside [-{K}, {K}]^d")
        dist = float(np.linalg.norm(t1 - t2))
        if dist == 0.0:
            continue
        diff = field_integrand(spec, t1) + field_integrand(spec, t2).scaled(-1.0)
        rows.append({"dist": dist, "norm_M": norm_M(diff, spec.family),
                     "fab": fab_integral(diff, a=a, b=b).value})
    table = pd.DataFrame(rows)
    if len(table) < 2:
        raise ValueError("holder_check needs at least two distinct pairs")
    xi = float(np.polyfit(np.log(table["dist"]), np.log(table["norm_M"]), 1)[0])
    fab_slope = float(np.polyfit(np.log(table["dist"]), np.log(table["fab"]), 1)[0])
    target = spec.d / a
    if spec.flavor == "one_sided" and a <= 1.0:
        verdict = "no_certificate"
    else:
        verdict = "holder" if xi > target else "no_certificate"
    return {"xi_hat": xi, "fab_slope": fab_slope, "threshold": target, "verdict": verdict,
            "gamma_max": max(xi - target, 0.0), "table": table}


def exceedance_profile(spec, t0, hs, eps, n_paths, partition, n_terms=64, seed=None):
    """P(||X(t0+h) - X(t0)|| > eps) for each h from sampled paths."""
    from sampler import SeedSpec, sample_field

    t0 = _as_t(spec, t0)
    grid = np.vstack([t0] + [t0 + np.broadcast_to(np.asarray(h, dtype=float), t0.shape) for h in hs])
    sample = sample_field(spec, grid, n_paths, partition, n_terms, seed or SeedSpec(0), check_coverage=False)
    base = sample.paths[:, 0, :]
    probs = [float(np.mean(np.linalg.norm(sample.paths[:, k, :] - base, axis=1) > eps))
             for k in range(1, grid.shape[0])]
    return pd.DataFrame({"h": [float(np.linalg.norm(g - t0)) for g in grid[1:]], "p_exceed": probs})

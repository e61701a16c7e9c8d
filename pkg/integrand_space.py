# integrand_space.py - integrability functional H(f, lambda), the quasi-norm ||f||_M and membership criteria
import math
import itertools
import logging
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from errors import ConvergenceError, NotIntegrableError, TailCertificationError
from levy_cf import PointLaw, concentration_c, control_functional, law_at
from operator_core import EigenDecomposition, eig_apply, make_probes, spectral_bounds
from polar import tau_rows
from quadrature import IntegralResult, integrate_spatial
from settings import CUBE_GRID, GOLDEN_ITERS, NORM_REL_WIDTH, NORM_POSTCHECK

logger = logging.getLogger(__name__)

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0
_MAX_CACHE = 500_000


# ---------- INTEGRANDS ----------

@dataclass
class IntegrandFamily:
    """Matrix-valued integrand s -> f(s) on R^d at a fixed time.

    ``fn`` maps one point s of shape (d,) to an m x m matrix, ``batch`` (if given)
    maps an (N, d) array to (N, m, m). Tail hints: ``tail_exponent`` is kappa in
    ||f(s)|| <= C tau_E(s)^kappa for large s, ``tail_scale`` the largest
    eigenvalue of E (1 when the hint is in ||s||), and ``h_tail_exponent`` the
    decay of the cube-sup integrand when it is known in closed form.
    """
    d: int
    m: int
    fn: Optional[Callable] = None
    batch: Optional[Callable] = None
    support_radius: Optional[float] = None
    tail_exponent: Optional[float] = None
    h_tail_exponent: Optional[float] = None
    null_points: Optional[np.ndarray] = None
    tail_scale: float = 1.0
    is_zero: bool = False

    def __post_init__(self):
        if self.fn is None and self.batch is None and not self.is_zero:
            raise ValueError("integrand needs fn or batch")
        if self.null_points is not None:
            self.null_points = np.asarray(self.null_points, dtype=float).reshape(-1, self.d)

    @classmethod
    def zero(cls, d, m):
        return cls(d=d, m=m, support_radius=1.0, is_zero=True)

    @classmethod
    def indicator(cls, lower, upper, matrix):
        """f(s) = matrix on the box lower <= s < upper, zero elsewhere."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        A = np.atleast_2d(np.asarray(matrix, dtype=float))
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise ValueError(f"empty box [{lower.tolist()}, {upper.tolist()})")
        reach = float(max(np.max(np.abs(lower)), np.max(np.abs(upper))))
        radius = 2.0 ** math.ceil(math.log2(reach)) if reach > 0 else 1.0

        def batch(S):
            inside = np.all((S >= lower) & (S < upper), axis=1)
            return inside[:, None, None] * A[None, :, :]

        corners = np.array(list(itertools.product(*zip(lower, upper))))
        return cls(d=lower.size, m=A.shape[0], batch=batch, support_radius=radius,
                   null_points=corners, is_zero=not np.any(A))

    def evaluate(self, S):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if self.is_zero:
            return np.zeros((S.shape[0], self.m, self.m))
        if self.batch is not None:
            out = np.asarray(self.batch(S), dtype=float)
        else:
            out = np.array([np.atleast_2d(np.asarray(self.fn(s), dtype=float)) for s in S])
        return out.reshape(S.shape[0], self.m, self.m)

    def at(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return self.evaluate(s[None, :])[0]

    def scaled(self, gamma):
        gamma = float(gamma)
        if gamma == 0.0 or self.is_zero:
            return IntegrandFamily.zero(self.d, self.m)
        inner = self
        return replace(self, fn=None, batch=lambda S: gamma * inner.evaluate(S))

    def __add__(self, other):
        if (self.d, self.m) != (other.d, other.m):
            raise ValueError(f"cannot add integrands of shapes {(self.d, self.m)} and {(other.d, other.m)}")
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        parts = (self, other)
        compact = all(p.support_radius is not None for p in parts)
        support = max(p.support_radius for p in parts) if compact else None
        tail = h_tail = None
        scales = {p.tail_scale for p in parts if p.support_radius is None}
        if not compact and len(scales) == 1:
            tails = [-math.inf if p.support_radius is not None else p.tail_exponent for p in parts]
            if None not in tails:
                tail = max(tails)
            h_tails = [-math.inf if p.support_radius is not None else p.h_tail_exponent for p in parts]
            if None not in h_tails:
                h_tail = max(h_tails)
        nulls = [p.null_points for p in parts if p.null_points is not None]
        return IntegrandFamily(
            d=self.d, m=self.m,
            batch=lambda S: self.evaluate(S) + other.evaluate(S),
            support_radius=support, tail_exponent=tail, h_tail_exponent=h_tail,
            null_points=np.vstack(nulls) if nulls else None,
            tail_scale=scales.pop() if len(scales) == 1 else 1.0,
        )


@dataclass
class BaseMeasure:
    """nu(ds) = weight(s) ds; ``weight`` is vectorized over (N, d) and defaults to 1."""
    d: int
    weight: Optional[Callable] = None

    def density(self, S):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if self.weight is None:
            return np.ones(S.shape[0])
        w = np.asarray(self.weight(S), dtype=float).reshape(S.shape[0])
        if np.any(w < 0):
            raise ValueError("base measure weight must be nonnegative")
        return w


class _NodeCache:
    """Integrand values and exponent eigendecompositions per quadrature node.

    Nodes repeat across the lambda values of a bisection, so only the cube sup
    is recomputed.
    """

    def __init__(self, f, family, base=None):
        if family.d != f.d or family.m != f.m:
            raise ValueError(f"integrand is (d={f.d}, m={f.m}) but exponents are (d={family.d}, m={family.m})")
        self.f = f
        self.family = family
        self.base = base if base is not None else BaseMeasure(f.d)
        self.store = {}

    def get(self, S):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        keys = [s.tobytes() for s in S]
        missing = [i for i, k in enumerate(keys) if k not in self.store]
        if missing:
            if len(self.store) + len(missing) > _MAX_CACHE:
                self.store.clear()
                missing = list(range(len(keys)))
            Sm = S[missing]
            F = self.f.evaluate(Sm)
            W = self.base.density(Sm)
            for i, s, Fi, wi in zip(missing, Sm, F, W):
                eig = self.family.eig_B(s)
                self.store[keys[i]] = (Fi, eig.basis, eig.spectrum, wi)
        rows = [self.store[k] for k in keys]
        F = np.stack([r[0] for r in rows])
        O = np.stack([r[1] for r in rows])
        LAM = np.stack([r[2] for r in rows])
        W = np.array([r[3] for r in rows])
        return F, O, LAM, W


def lower_index(family):
    if family.declared_a is not None:
        return family.declared_a
    return spectral_bounds(family, make_probes(family.d, n_random=64)).a_hat


def _hint_for_power(f, family):
    """Tail exponent of s -> tau_s(f(s) u), which behaves like ||f(s)||^a for small ||f||."""
    if f.h_tail_exponent is not None:
        return f.h_tail_exponent
    if f.tail_exponent is None:
        return None
    if f.tail_exponent >= 0:
        return f.tail_exponent
    return f.tail_exponent * lower_index(family)


# ---------- CUBE SUP ----------

class CubeSup(NamedTuple):
    value: float   # grid maximum after refinement, a lower bound for the sup
    upper: float   # value plus the Lipschitz pad


def _axis_points(m):
    if m <= 3:
        return CUBE_GRID
    return max(5, int(round(CUBE_GRID ** (2.0 / (m - 1)))))


def _face_layout(m):
    n = _axis_points(m)
    ticks = np.linspace(-1.0, 1.0, n)
    free = np.array(list(itertools.product(ticks, repeat=m - 1)))
    faces = []
    for i in range(m):
        U = np.insert(free, i, 1.0, axis=1)
        faces.append(U)
    free_cols = np.array([[j for j in range(m) if j != i] for i in range(m)])
    return n, free, np.vstack(faces), free_cols


def cube_sup_rows(FO, LAM, lam):
    """Cube sup of tau(F^T u) over ||u||_inf <= 1/lam for many nodes at once.

    Row n carries FO[n] = F_n O_n with O_n the eigenbasis of the exponent and
    LAM[n] its spectrum. tau(-x) = tau(x), so only the m faces u_i = +1/lam are
    scanned. Returns (values, uppers).
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    FO = np.asarray(FO, dtype=float)
    LAM = np.atleast_2d(np.asarray(LAM, dtype=float))
    N, m = LAM.shape
    if m == 1:
        vals = (np.abs(FO[:, 0, 0]) / lam) ** (1.0 / LAM[:, 0])
        return vals, vals.copy()

    n, free, U, free_cols = _face_layout(m)
    Q = free.shape[0]
    Y = np.einsum("pi,nij->npj", U / lam, FO)
    T = tau_rows(np.repeat(LAM, U.shape[0], axis=0), Y.reshape(-1, m)).reshape(N, -1)
    best = np.argmax(T, axis=1)
    value = T[np.arange(N), best]
    face = best // Q
    q = best % Q

    # Lipschitz pad from the grid neighbours of the best point
    grid_idx = np.array(np.unravel_index(q, (n,) * (m - 1))).T
    pad = np.zeros(N)
    for k in range(m - 1):
        for step in (-1, 1):
            nb = grid_idx.copy()
            nb[:, k] += step
            ok = (nb[:, k] >= 0) & (nb[:, k] < n)
            nb[:, k] = np.clip(nb[:, k], 0, n - 1)
            q_nb = np.ravel_multi_index(tuple(nb.T), (n,) * (m - 1))
            diff = np.abs(value - T[np.arange(N), face * Q + q_nb])
            pad = np.maximum(pad, np.where(ok, 0.5 * diff, 0.0))

    rows = np.arange(N)[:, None]
    cols = free_cols[face]
    coords = free[q].copy()
    h = 2.0 / (n - 1)

    def evaluate(c):
        u = np.empty((N, m))
        u[rows, cols] = c
        u[np.arange(N), face] = 1.0
        y = np.einsum("ni,nij->nj", u / lam, FO)
        return tau_rows(LAM, y)

    for k in range(m - 1):
        lo = np.maximum(coords[:, k] - h, -1.0)
        hi = np.minimum(coords[:, k] + h, 1.0)

        def along(x, k=k):
            c = coords.copy()
            c[:, k] = x
            return evaluate(c)

        x_best, f_best = _golden_max(along, lo, hi)
        better = f_best > value
        coords[better, k] = x_best[better]
        value = np.where(better, f_best, value)
    return value, value + pad


def _golden_max(evaluate, lo, hi):
    """Row-wise golden-section search for the maximum of evaluate on [lo, hi]."""
    a, b = lo.copy(), hi.copy()
    x1 = b - _GOLD * (b - a)
    x2 = a + _GOLD * (b - a)
    f1, f2 = evaluate(x1), evaluate(x2)
    for _ in range(GOLDEN_ITERS):
        left = f1 >= f2
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        new = np.where(left, b - _GOLD * (b - a), a + _GOLD * (b - a))
        fn = evaluate(new)
        x1, f1, x2, f2 = (np.where(left, new, x2), np.where(left, fn, f2),
                          np.where(left, x1, new), np.where(left, f1, fn))
    return np.where(f1 >= f2, x1, x2), np.maximum(f1, f2)


def cube_sup_bounds(law, F, lam):
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape != law.B.shape:
        raise ValueError(f"F is {F.shape} but the law lives in R^{law.B.shape[0]}")
    values, uppers = cube_sup_rows((F @ law.eig.basis)[None], law.eig.spectrum[None], lam)
    return CubeSup(float(values[0]), float(uppers[0]))


def cube_sup_tau(law, F, lam):
    """sup of tau_{B_s}(F^T u) over the cube ||u||_inf <= 1/lam."""
    return cube_sup_bounds(law, F, lam).value


# ---------- H AND THE QUASI-NORM ----------

class _HFunctional:
    def __init__(self, f, family, base=None):
        self.f = f
        self.nodes = _NodeCache(f, family, base)
        self.tail = None if f.is_zero else _hint_for_power(f, family)

    def integrand(self, lam):
        def fn(S):
            F, O, LAM, W = self.nodes.get(S)
            values, _ = cube_sup_rows(F @ O, LAM, lam)
            return values * W
        return fn

    def value(self, lam):
        if lam <= 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        if self.f.is_zero:
            return IntegralResult(0.0)
        return integrate_spatial(self.integrand(lam), self.f.d, self.f.support_radius, self.tail,
                                 self.f.null_points, self.f.tail_scale)

    def __call__(self, lam):
        res = self.value(lam)
        return math.inf if res.divergent else res.value


def H_result(f, family, base=None, lam=1.0):
    return _HFunctional(f, family, base).value(lam)


def H(f, family, base=None, lam=1.0):
    """H(f, lam) = int sup_{||u||_inf <= 1/lam} tau_s(f(s)^T u) nu(ds); math.inf when divergent."""
    return _HFunctional(f, family, base)(lam)


def is_integrable(f, family, base=None):
    return math.isfinite(H(f, family, base, 1.0))


def norm_M(f, family, base=None):
    """||f||_M = inf{lam > 0: H(f, lam) <= 1} by log-scale bisection."""
    if f.is_zero:
        return 0.0
    h = _HFunctional(f, family, base)
    h1 = h(1.0)
    if not math.isfinite(h1) and all(not math.isfinite(h(lam)) for lam in (1e3, 1e-3)):
        raise NotIntegrableError("H(f, lambda) diverges for every probed lambda")

    if h1 <= 1.0:
        hi, lo = 1.0, 0.5
        while h(lo) <= 1.0:
            hi = lo
            lo *= 0.5
            if lo < 2.0 ** -60:
                logger.info("H(f, lambda) <= 1 down to 2^-60; treating f as zero")
                return 0.0
    else:
        lo, hi = 1.0, 2.0
        while h(hi) > 1.0:
            lo = hi
            hi *= 2.0
            if hi > 2.0 ** 60:
                raise NotIntegrableError("H(f, lambda) > 1 up to lambda = 2^60")

    while hi / lo - 1.0 > NORM_REL_WIDTH:
        mid = math.sqrt(lo * hi)
        if h(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    check = h(hi)
    if abs(check - 1.0) > NORM_POSTCHECK:
        logger.error(f"H(f, ||f||_M) = {check:.6g} differs from 1 by more than {NORM_POSTCHECK}")
        raise ConvergenceError("quasi-norm bisection", check - 1.0)
    return hi


# ---------- MEMBERSHIP CRITERIA ----------

def fab_integral(f, base=None, a=0.5, b=1.0):
    """int (||f(s)||^a + ||f(s)||^b) nu(ds) with the operator norm."""
    if not (0 < a <= b):
        raise ValueError(f"need 0 < a <= b, got a={a}, b={b}")
    if f.is_zero:
        return IntegralResult(0.0)
    base = base if base is not None else BaseMeasure(f.d)

    def fn(S):
        norms = np.linalg.norm(f.evaluate(S), ord=2, axis=(1, 2))
        return (norms ** a + norms ** b) * base.density(S)

    tail = None
    if f.tail_exponent is not None:
        tail = f.tail_exponent * (a if f.tail_exponent < 0 else b)
    return integrate_spatial(fn, f.d, f.support_radius, tail, f.null_points, f.tail_scale)


def check_Fab(f, base=None, a=0.5, b=1.0):
    return not fab_integral(f, base, a, b).divergent


def check_diagonalized(f, family, base=None):
    """Column test int ||g_j(s)||^{1/lambda_j(s)} nu(ds) < inf with g(s) = f(s) O(s).

    O(s) is the eigenbasis of B(s), column j paired with the j-th smallest
    eigenvalue. Returns (all columns finite, per-column report).
    """
    if f.is_zero:
        return True, [{"column": j, "value": 0.0, "error": 0.0, "divergent": False, "truncated": False}
                      for j in range(f.m)]
    if f.support_radius is None and f.tail_exponent is None:
        raise TailCertificationError()
    nodes = _NodeCache(f, family, base)
    tail = None
    if f.tail_exponent is not None:
        tail = f.tail_exponent * lower_index(family) if f.tail_exponent < 0 else f.tail_exponent
    report = []
    for j in range(f.m):
        def fn(S, j=j):
            F, O, LAM, W = nodes.get(S)
            G = F @ O
            norms = np.linalg.norm(G[:, :, j], axis=1)
            return norms ** (1.0 / LAM[:, j]) * W

        res = integrate_spatial(fn, f.d, f.support_radius, tail, f.null_points, f.tail_scale)
        report.append({"column": j, "value": res.value, "error": res.error,
                       "divergent": res.divergent, "truncated": res.truncated})
        logger.debug(f"column {j}: value {res.value:.6g} divergent {res.divergent}")
    return all(not r["divergent"] for r in report), report


def control_integral(f, family, sigma, base=None):
    """int V(f(s), s) nu(ds) with V(E, s) = int min{1, ||E x||^2} phi(s, dx); math.inf when divergent."""
    if f.is_zero:
        return 0.0
    nodes = _NodeCache(f, family, base)

    def fn(S):
        F, O, LAM, W = nodes.get(S)
        out = np.empty(F.shape[0])
        for i in range(F.shape[0]):
            eig = EigenDecomposition(O[i], LAM[i])
            law = PointLaw(eig_apply(eig, LAM[i]), sigma, eig)
            out[i] = control_functional(F[i], law)
        return out * W

    res = integrate_spatial(fn, f.d, f.support_radius, _hint_for_power(f, family),
                            f.null_points, f.tail_scale)
    return math.inf if res.divergent else res.value


def control_measure_density(family, sigma, s):
    """Density c(s) of the control measure with respect to nu."""
    return concentration_c(law_at(family, sigma, s))

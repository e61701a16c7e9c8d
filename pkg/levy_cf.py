# levy_cf.py - spectral measures, Levy-measure functionals and log-characteristic functions
import math
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special, stats
from scipy.stats import qmc

from errors import FullnessError, QuadratureError, SpectralBoundError
from operator_core import EigenDecomposition, as_symmetric, eigendecompose
from polar import tau

logger = logging.getLogger(__name__)

# Radial quadrature constants
LEFT_PHASE = 1e-3        # below this phase bound the series remainder is used
HEAD_PHASE = 1.0
MARGIN = 2.0 * math.pi   # phase window around turning points kept in the x domain
GROUP_TOL = 1e-12
RADIAL_RTOL = 1e-8
SCAN_STEP = 0.02
SCAN_MAX = 20000


def stable_constant(alpha):
    """K(alpha) = alpha * int_0^inf (1 - cos v) v^{-1-alpha} dv = pi / (2 Gamma(alpha) sin(pi alpha / 2))."""
    if not (0.0 < alpha < 2.0):
        raise ValueError(f"stable index must lie in (0, 2), got {alpha}")
    return math.pi / (2.0 * special.gamma(alpha) * math.sin(math.pi * alpha / 2.0))


# ---------- SPECTRAL MEASURE ----------

@dataclass
class SpectralMeasure:
    directions: np.ndarray
    weights: np.ndarray
    symmetrized: bool = False

    @classmethod
    def from_atoms(cls, atoms):
        """Build from (direction, weight) pairs; asymmetric input is mirrored at half weight."""
        if not atoms:
            raise ValueError("spectral measure needs at least one atom")
        dirs = np.array([np.atleast_1d(np.asarray(d, dtype=float)) for d, _ in atoms])
        w = np.array([float(wt) for _, wt in atoms])
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("atom weights must be positive and finite")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError(f"atom directions must be unit vectors (norms {norms.tolist()})")
        symmetrized = False
        if not _is_symmetric(dirs, w):
            logger.warning("spectral measure is not symmetric; adding mirror atoms at half weight")
            dirs = np.vstack([dirs, -dirs])
            w = np.concatenate([w, w]) / 2.0
            dirs, w = _merge(dirs, w)
            symmetrized = True
        if np.linalg.matrix_rank(dirs, tol=1e-10) < dirs.shape[1]:
            raise FullnessError("atoms do not span R^m")
        return cls(dirs, w, symmetrized)

    @classmethod
    def axis(cls, m, weight=1.0):
        eye = np.eye(m)
        atoms = [(eye[i], weight) for i in range(m)] + [(-eye[i], weight) for i in range(m)]
        return cls.from_atoms(atoms)

    @property
    def m(self):
        return self.directions.shape[1]

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def scaled(self, t):
        return SpectralMeasure(self.directions.copy(), self.weights * t, self.symmetrized)

    def pairs(self):
        """One representative per mirror pair with the pair's combined weight."""
        reps, wts = [], []
        for theta, w in zip(self.directions, self.weights):
            nz = np.flatnonzero(np.abs(theta) > 1e-14)
            rep = theta if theta[nz[0]] > 0 else -theta
            for i, r in enumerate(reps):
                if np.max(np.abs(r - rep)) <= 1e-12:
                    wts[i] += w
                    break
            else:
                reps.append(rep)
                wts.append(w)
        return np.array(reps), np.array(wts)


def _is_symmetric(dirs, w):
    for theta, wt in zip(dirs, w):
        mirror = np.max(np.abs(dirs + theta), axis=1) <= 1e-12
        if not np.any(mirror) or abs(w[mirror].sum() - wt) > 1e-12 * max(1.0, wt):
            return False
    return True


def _merge(dirs, w):
    out_d, out_w = [], []
    for theta, wt in zip(dirs, w):
        for i, d in enumerate(out_d):
            if np.max(np.abs(d - theta)) <= 1e-12:
                out_w[i] += wt
                break
        else:
            out_d.append(theta)
            out_w.append(wt)
    return np.array(out_d), np.array(out_w)


@dataclass
class PointLaw:
    """Operator-stable law at one location: exponent B_s and spectral measure."""
    B: np.ndarray
    sigma: SpectralMeasure
    eig: Optional[EigenDecomposition] = field(default=None, repr=False)

    def __post_init__(self):
        self.B = as_symmetric(self.B)
        if self.eig is None:
            self.eig = eigendecompose(self.B)
        if self.eig.spectrum[0] <= 0.5:
            raise SpectralBoundError(f"smallest eigenvalue {self.eig.spectrum[0]:.6g} <= 1/2")
        if self.B.shape[0] != self.sigma.m:
            raise ValueError(f"exponent is {self.B.shape[0]}x{self.B.shape[0]} but atoms live in R^{self.sigma.m}")


def law_at(family, sigma, s):
    return PointLaw(family.B_at(s), sigma, family.eig_B(s))


# ---------- RADIAL TERM ----------

def _phase_terms(eig, theta, u):
    c = (eig.basis.T @ theta) * (eig.basis.T @ u)
    lams, cs = [], []
    for lam, cj in zip(eig.spectrum, c):
        if lams and abs(lam - lams[-1]) <= GROUP_TOL * max(1.0, lam):
            cs[-1] += cj
        else:
            lams.append(float(lam))
            cs.append(float(cj))
    big = max((abs(x) for x in cs), default=0.0)
    keep = [(l, x) for l, x in zip(lams, cs) if abs(x) > 1e-14 * big and x != 0.0]
    return [l for l, _ in keep], [x for _, x in keep]


def radial_cf_term(B_s, theta, u):
    """int_0^inf (cos<r^{B} theta, u> - 1) r^{-2} dr, always <= 0."""
    eig = B_s if isinstance(B_s, EigenDecomposition) else eigendecompose(B_s)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if abs(np.linalg.norm(theta) - 1.0) > 1e-10:
        raise ValueError("theta must be a unit vector")
    lams, cs = _phase_terms(eig, theta, u)
    if not cs:
        return 0.0
    if len(cs) == 1:
        alpha = 1.0 / lams[0]
        return -stable_constant(alpha) * abs(cs[0]) ** alpha
    return min(_RadialIntegral(lams, cs).value(), 0.0)


class _RadialIntegral:
    """J = int (cos p(x) - 1) e^{-x} dx over R with p(x) = sum_j c_j e^{lambda_j x}.

    Left of the point where |p| <= LEFT_PHASE the cosine series is integrated in
    closed form; up to |p| = 1 a plain adaptive rule is used; beyond that the
    line is cut at the turning points of p, each monotone piece is mapped to
    v = p(x) and handed to the Fourier-weighted QUADPACK rules.
    """

    def __init__(self, lams, cs):
        self.lams = lams
        self.cs = cs
        self.S = sum(abs(c) for c in cs)
        self.err = 0.0

    def phase(self, x):
        return sum(c * math.exp(l * x) for l, c in zip(self.lams, self.cs))

    def dphase(self, x):
        return sum(c * l * math.exp(l * x) for l, c in zip(self.lams, self.cs))

    def _dphase_sign(self, x):
        zs = [l * x for l in self.lams]
        zm = max(zs)
        return sum(c * l * math.exp(z - zm) for l, c, z in zip(self.lams, self.cs, zs))

    def f(self, x):
        p = self.phase(x)
        if abs(p) < 1e-3:
            q = sum(c * math.exp((l - 0.5) * x) for l, c in zip(self.lams, self.cs))
            return -0.5 * q * q * (1.0 - p * p / 12.0)
        sh = math.sin(0.5 * p)
        return -2.0 * sh * sh * math.exp(-x)

    def x_where(self, level):
        ratio = math.log(level / self.S)
        return ratio / self.lams[0] if ratio <= 0 else ratio / self.lams[-1]

    def _left_remainder(self, xl):
        total = 0.0
        n = len(self.lams)
        for i in range(n):
            for j in range(n):
                e = self.lams[i] + self.lams[j] - 1.0
                total -= 0.5 * self.cs[i] * self.cs[j] * math.exp(e * xl) / e
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    for l in range(n):
                        e = self.lams[i] + self.lams[j] + self.lams[k] + self.lams[l] - 1.0
                        total += (self.cs[i] * self.cs[j] * self.cs[k] * self.cs[l]
                                  * math.exp(e * xl) / (24.0 * e))
        return total

    def _quad(self, fn, a, b, **kw):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(fn, a, b, **kw)[:2]
        self.err += abs(err)
        return val

    def _critical_points(self, x0):
        n = len(self.lams)
        top = n - 1
        a_top = abs(self.cs[top] * self.lams[top])
        x_hi = x0
        for j in range(top):
            aj = abs(self.cs[j] * self.lams[j])
            x_hi = max(x_hi, math.log((n - 1) * aj / a_top) / (self.lams[top] - self.lams[j]))
        x_hi += 1.0
        npts = int(min(SCAN_MAX, max(200, math.ceil((x_hi - x0) / SCAN_STEP))))
        grid = np.linspace(x0, x_hi, npts + 1)
        signs = [self._dphase_sign(x) for x in grid]
        crit = []
        for k in range(npts):
            if signs[k] == 0.0:
                if k > 0:
                    crit.append(float(grid[k]))
            elif signs[k] * signs[k + 1] < 0:
                crit.append(optimize.brentq(self._dphase_sign, grid[k], grid[k + 1], xtol=1e-14, rtol=4e-16))
        return crit

    def _solve_phase(self, target, lo, hi):
        g = lambda x: self.phase(x) - target
        if math.isinf(hi):
            step = 1.0
            hi = lo + step
            while g(lo) * g(hi) > 0:
                step *= 2.0
                hi = lo + step
        return optimize.brentq(g, lo, hi, xtol=1e-14, rtol=4e-16)

    def value(self):
        xl = self.x_where(LEFT_PHASE)
        x0 = self.x_where(HEAD_PHASE)
        scale = math.exp(-x0)
        eps = 1e-14 * scale
        total = self._left_remainder(xl)
        total += self._quad(self.f, xl, x0, epsabs=eps, epsrel=1e-12, limit=200)
        cuts = [x0] + self._critical_points(x0) + [math.inf]
        sign_inf = 1.0 if self.cs[-1] > 0 else -1.0
        for xa, xb in zip(cuts[:-1], cuts[1:]):
            total += self._piece(xa, xb, sign_inf, eps)
        if self.err > max(RADIAL_RTOL * abs(total), 1e-12 * scale):
            raise QuadratureError("radial characteristic-function term", self.err)
        return total

    def _piece(self, xa, xb, sign_inf, eps):
        pa = self.phase(xa)
        pb = self.phase(xb) if math.isfinite(xb) else sign_inf * math.inf
        if math.isfinite(xb) and abs(pb - pa) <= 3.0 * MARGIN:
            return self._quad(self.f, xa, xb, epsabs=eps, epsrel=1e-12, limit=200)
        sgn = 1.0 if pb > pa else -1.0
        xa2 = self._solve_phase(pa + sgn * MARGIN, xa, xb)
        total = self._quad(self.f, xa, xa2, epsabs=eps, epsrel=1e-12, limit=200)
        if math.isfinite(xb):
            xb2 = self._solve_phase(pb - sgn * MARGIN, xa2, xb)
            total += self._quad(self.f, xb2, xb, epsabs=eps, epsrel=1e-12, limit=200)
            w_hi = sgn * (pb - sgn * MARGIN)
            one_part = math.exp(-xa2) - math.exp(-xb2)
        else:
            xb2 = math.inf
            w_hi = math.inf
            one_part = math.exp(-xa2)
        w_lo = sgn * (pa + sgn * MARGIN)
        inverse = _PhaseInverse(self, xa2, xb2, sgn)

        def g(w):
            x = inverse(sgn * w)
            return math.exp(-x) / abs(self.dphase(x))

        if math.isinf(w_hi):
            cos_part = self._quad(g, w_lo, np.inf, weight="cos", wvar=1.0, epsabs=eps, limlst=100)
        else:
            cos_part = self._quad(g, w_lo, w_hi, weight="cos", wvar=1.0, epsabs=eps, epsrel=1e-12, limit=500)
        return total + cos_part - one_part


class _PhaseInverse:
    """x(v) on a monotone piece of p, Newton warm-started from the previous call."""

    def __init__(self, radial, x_lo, x_hi, sgn):
        self.radial = radial
        self.x_lo = x_lo
        self.x_hi = x_hi
        self.sgn = sgn
        self.last = x_lo

    def __call__(self, v):
        lo, hi = self.x_lo, self.x_hi
        x = self.last
        tol = 1e-15 * max(1.0, abs(v))
        for _ in range(200):
            fx = self.radial.phase(x) - v
            if abs(fx) <= tol:
                break
            if self.sgn * fx > 0:
                hi = x
            else:
                lo = x
            xn = x - fx / self.radial.dphase(x)
            if abs(xn - x) > 4.0:
                xn = x + math.copysign(4.0, xn - x)
            if not (lo < xn < hi):
                xn = 0.5 * (lo + hi) if math.isfinite(hi) else x + 1.0
            if abs(xn - x) <= 1e-15 * max(1.0, abs(x)):
                x = xn
                break
            x = xn
        self.last = x
        return x


# ---------- LOG-CF AND FUNCTIONALS ----------

def log_cf(law, u):
    """psi_s(u) = sum_k w_k int_0^inf (cos<r^{B_s} theta_k, u> - 1) r^{-2} dr."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if not np.any(u):
        return 0.0
    reps, wts = law.sigma.pairs()
    return float(sum(w * radial_cf_term(law.eig, th, u) for th, w in zip(reps, wts)))


def concentration_c(law):
    """c(s) = int min{1, ||x||^2} phi(s, dx), split at r* = tau_B(theta)."""
    total = 0.0
    lam = law.eig.spectrum
    for theta, w in zip(law.sigma.directions, law.sigma.weights):
        y = law.eig.basis.T @ theta
        r_star = tau(law.eig, theta)
        inner = float(np.sum(y * y * r_star ** (2.0 * lam - 1.0) / (2.0 * lam - 1.0)))
        total += w * (inner + 1.0 / r_star)
    return total


def control_functional(E, law):
    """V(E, s) = int min{1, ||E x||^2} phi(s, dx) for a linear map E."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    lam = law.eig.spectrum
    total = 0.0
    for theta, w in zip(law.sigma.directions, law.sigma.weights):
        y = law.eig.basis.T @ theta
        cols = (E @ law.eig.basis) * y
        G = cols.T @ cols
        total += w * _min_one_radial(G, lam)
    return total


def _min_one_radial(G, lam):
    expo = lam[:, None] + lam[None, :]
    if not np.any(G):
        return 0.0

    def Q(x):
        return float(np.sum(G * np.exp(expo * x)))

    gnorm = float(np.sum(np.abs(G)))
    x_lo = min(0.0, math.log(1e-6 / gnorm) / (2.0 * lam[0]))
    series = float(np.sum(G * np.exp((expo - 1.0) * x_lo) / (expo - 1.0)))
    x = x_lo
    grid = [x]
    while Q(x) < 1.0 and x < x_lo + 400.0:
        x += 0.25
        grid.append(x)
    if Q(x) < 1.0:
        # kernel direction; the map never leaves the unit ball
        return series + integrate.quad(lambda z: Q(z) * math.exp(-z), x_lo, x, limit=200)[0]
    x_hi = x + 40.0
    cross = optimize.brentq(lambda z: Q(z) - 1.0, grid[-2], grid[-1])
    fn = lambda z: min(1.0, Q(z)) * math.exp(-z)
    body = integrate.quad(fn, x_lo, cross, epsrel=1e-12, limit=200)[0]
    body += integrate.quad(fn, cross, x_hi, epsrel=1e-12, limit=200)[0]
    return series + body + math.exp(-x_hi)


def normalized_pair(law, u):
    c = concentration_c(law)
    return 1.0 / c, log_cf(law, u) / c


def sphere_directions(m, n, seed=0):
    if m == 1:
        return np.array([[1.0], [-1.0]])
    h = qmc.Halton(d=m, scramble=True, seed=seed).random(n)
    z = stats.norm.ppf(np.clip(h, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def psi_bounds_check(law, ring, samples=200):
    """Empirical (K1, K2) = (min, max) of |psi_s(u)| over u on the ring rho1 <= ||u|| <= rho2."""
    rho1, rho2 = ring
    if not (0 < rho1 <= rho2):
        raise ValueError(f"ring needs 0 < rho1 <= rho2, got {ring}")
    m = law.sigma.m
    n_dir = 2 if m == 1 else max(8, samples // 4)
    dirs = sphere_directions(m, n_dir)
    n_rad = max(2, samples // len(dirs))
    radii = np.linspace(rho1, rho2, n_rad)
    vals = [abs(log_cf(law, r * d)) for d in dirs for r in radii]
    k1, k2 = min(vals), max(vals)
    if k1 <= 1e-14 * max(1.0, k2):
        raise FullnessError(f"|psi| vanishes on the ring {ring}")
    return k1, k2

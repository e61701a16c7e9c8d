# operator_core.py - symmetric matrix calculus (Jacobi eigendecomposition, matrix powers)
import math
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.stats import qmc

from errors import AsymmetricMatrixError, SpectralBoundError
from settings import (
    SYMMETRY_TOL, JACOBI_TOL, JACOBI_MAX_SWEEPS, COMMUTE_TOL,
    PROBE_RADIUS_EXP, N_RANDOM_PROBES,
)

logger = logging.getLogger(__name__)


class EigenDecomposition(NamedTuple):
    basis: np.ndarray      # orthogonal, columns are eigenvectors
    spectrum: np.ndarray   # ascending


class SpectralBounds(NamedTuple):
    a_hat: float
    b_hat: float
    within_declared: bool


def as_symmetric(M):
    """Validate a square matrix and return its exactly symmetric copy.

    Asymmetry up to SYMMETRY_TOL is averaged away, anything larger is
    rejected so configuration mistakes surface instead of being hidden.
    """
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    asym = float(np.max(np.abs(A - A.T))) if A.shape[0] > 1 else 0.0
    if asym > SYMMETRY_TOL:
        raise AsymmetricMatrixError(asym)
    return 0.5 * (A + A.T)


def _jacobi(a):
    m = a.shape[0]
    v = np.eye(m)
    scale = max(float(np.linalg.norm(a)), 1e-300)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = math.sqrt(float(np.sum(a * a) - np.sum(np.diag(a) ** 2)))
        if off <= JACOBI_TOL * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


def eigendecompose(M):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns the spectrum ascending; every basis column has its first
    nonzero component positive, so identical input gives identical output.
    """
    A = as_symmetric(M)
    m = A.shape[0]
    if m == 1:
        return EigenDecomposition(np.ones((1, 1)), A[0].copy())
    if not np.any(A - np.diag(np.diag(A))):
        spectrum, basis = np.diag(A).copy(), np.eye(m)
    else:
        spectrum, basis = _jacobi(A.copy())
    order = np.argsort(spectrum, kind="stable")
    spectrum = spectrum[order]
    basis = basis[:, order]
    for j in range(m):
        col = basis[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            basis[:, j] = -col
    return EigenDecomposition(basis, spectrum)


def eig_apply(eig, values):
    """O diag(values) O^T for a cached decomposition."""
    O = eig.basis
    return (O * np.asarray(values, dtype=float)) @ O.T


def eig_power(eig, r):
    if r <= 0:
        raise ValueError(f"matrix power needs r > 0, got {r}")
    return eig_apply(eig, np.exp(math.log(r) * eig.spectrum))


def matrix_power(M, r):
    """r^M = exp((ln r) M) for symmetric M and r > 0."""
    if r <= 0:
        raise ValueError(f"matrix power needs r > 0, got {r}")
    if isinstance(M, EigenDecomposition):
        return eig_power(M, r)
    return eig_power(eigendecompose(M), r)


def commute_check(A, B, tol=COMMUTE_TOL):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    return commutator_defect(A, B) <= tol


def commutator_defect(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return float(np.max(np.abs(A @ B - B @ A)))


@dataclass
class ExponentFamily:
    """Location-dependent exponents s -> B(s) (and optionally D(s)).

    ``alpha`` marks the multi-stable case B(s) = alpha(s)^{-1} I, ``delta`` the
    case D(s) = delta(s) I; both feed the log-modulus diagnostics. Constant
    families cache their decompositions.
    """
    d: int
    m: int
    B: Callable
    D: Optional[Callable] = None
    declared_a: Optional[float] = None
    declared_b: Optional[float] = None
    alpha: Optional[Callable] = None
    delta: Optional[Callable] = None
    constant: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def constant_family(cls, B, D=None, d=1, declared_a=None, declared_b=None):
        B = as_symmetric(B)
        Dm = as_symmetric(D) if D is not None else None
        return cls(d=d, m=B.shape[0], B=lambda s: B,
                   D=(lambda s: Dm) if Dm is not None else None,
                   declared_a=declared_a, declared_b=declared_b, constant=True)

    @classmethod
    def multistable(cls, alpha, m=1, d=1, D=None, declared_a=None, declared_b=None):
        eye = np.eye(m)
        return cls(d=d, m=m, B=lambda s: eye / alpha(s), D=D, alpha=alpha,
                   declared_a=declared_a, declared_b=declared_b)

    def B_at(self, s):
        return as_symmetric(self.B(np.atleast_1d(np.asarray(s, dtype=float))))

    def D_at(self, s):
        if self.D is None:
            raise ValueError("exponent family has no D(s)")
        return as_symmetric(self.D(np.atleast_1d(np.asarray(s, dtype=float))))

    def eig_B(self, s):
        if self.constant:
            if "B" not in self._cache:
                self._cache["B"] = eigendecompose(self.B_at(s))
            return self._cache["B"]
        return eigendecompose(self.B_at(s))

    def eig_D(self, s):
        if self.constant:
            if "D" not in self._cache:
                self._cache["D"] = eigendecompose(self.D_at(s))
            return self._cache["D"]
        return eigendecompose(self.D_at(s))


def make_probes(d, radius_exp=PROBE_RADIUS_EXP, n_random=N_RANDOM_PROBES, seed=0):
    """Dyadic grid on [-2^R, 2^R]^d plus quasi-random points with log-uniform radii."""
    step = 1 if d <= 2 else 2
    axis = [0.0]
    for k in range(-radius_exp, radius_exp + 1, step):
        axis.extend([2.0 ** k, -(2.0 ** k)])
    axis = np.array(sorted(axis))
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    if n_random <= 0:
        return grid
    h = qmc.Halton(d=d + 1, scramble=True, seed=seed).random(n_random)
    scale = 2.0 ** (radius_exp * (2.0 * h[:, -1] - 1.0))
    rand = (2.0 * h[:, :d] - 1.0) * scale[:, None]
    return np.vstack([grid, rand])


def spectral_bounds(family, probe_set):
    """Empirical (a, b) over the probes: a = min 1/Lambda(s), b = max 1/lambda(s)."""
    probes = np.atleast_2d(np.asarray(probe_set, dtype=float))
    if probes.size == 0:
        raise ValueError("probe set is empty")
    if probes.shape[1] != family.d and probes.shape[0] == family.d:
        probes = probes.T
    lam_min, lam_max = math.inf, -math.inf
    for s in probes:
        spec = family.eig_B(s).spectrum
        if spec[0] <= 0.5:
            raise SpectralBoundError(f"eigenvalue {spec[0]:.6g} <= 1/2 at s={s.tolist()}")
        lam_min = min(lam_min, float(spec[0]))
        lam_max = max(lam_max, float(spec[-1]))
    a_hat, b_hat = 1.0 / lam_max, 1.0 / lam_min
    ok = 0.0 < a_hat <= b_hat < 2.0
    if family.declared_a is not None and a_hat < family.declared_a - 1e-12:
        ok = False
    if family.declared_b is not None and b_hat > family.declared_b + 1e-12:
        ok = False
    if not ok:
        logger.warning(f"spectral bounds ({a_hat:.6g}, {b_hat:.6g}) outside declared "
                       f"({family.declared_a}, {family.declared_b})")
    return SpectralBounds(a_hat, b_hat, ok)

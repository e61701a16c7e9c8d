# polar.py - generalized polar coordinates (tau_D, l_D) for symmetric exponents
import math
import logging
from typing import NamedTuple

import numpy as np

from errors import ConvergenceError, NotInQError, PolarOriginError
from operator_core import EigenDecomposition, eigendecompose, eig_apply
from settings import POLAR_TOL, POLAR_MAX_ITER, POLAR_ZERO

logger = logging.getLogger(__name__)


class PolarPoint(NamedTuple):
    tau: float
    direction: np.ndarray


def _as_eig(D):
    eig = D if isinstance(D, EigenDecomposition) else eigendecompose(D)
    if eig.spectrum[0] <= 0:
        raise NotInQError(eig.spectrum[0])
    return eig


def tau(D, x):
    """Radial part tau_D(x): the unique r > 0 with ||r^{-D} x|| = 1, tau(0) = 0.

    Solved for l = log r by safeguarded Newton on
    h(l) = log ||e^{-lD} x|| = 0.5 * logsumexp(2 log|y_j| - 2 lambda_j l), y = O^T x,
    which is strictly decreasing and bracketed by log||x||/Lambda and log||x||/lambda.
    """
    eig = _as_eig(D)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(tau_batch(eig, x[None, :])[0])


def tau_batch(D, X):
    """Vectorized tau over the rows of X."""
    eig = _as_eig(D)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X @ eig.basis
    return tau_rows(np.broadcast_to(eig.spectrum, Y.shape), Y)


def tau_rows(LAM, Y):
    """tau for rows with their own spectra: row k solves sum_j Y_kj^2 r^{-2 LAM_kj} = 1.

    Y holds coordinates in the eigenbasis of the row's exponent, so nodes with
    different exponents are solved in one pass.
    """
    LAM = np.atleast_2d(np.asarray(LAM, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    norms = np.sqrt(np.sum(Y * Y, axis=1))
    out = np.zeros(Y.shape[0])
    active = norms >= POLAR_ZERO
    if not np.any(active):
        return out
    lam = LAM[active]
    iso = lam.max(axis=1) - lam.min(axis=1) <= 1e-15 * lam.max(axis=1)
    if np.all(iso):
        out[active] = norms[active] ** (1.0 / lam[:, 0])
        return out

    Ya = np.abs(Y[active])
    with np.errstate(divide="ignore"):
        LY = np.log(Ya)
    present = Ya > 0
    lam_lo = np.where(present, lam, np.inf).min(axis=1)
    lam_hi = np.where(present, lam, -np.inf).max(axis=1)
    logn = np.log(norms[active])
    b1, b2 = logn / lam_hi, logn / lam_lo
    lo, hi = np.minimum(b1, b2), np.maximum(b1, b2)
    ell = 0.5 * (lo + hi)
    done = np.zeros(ell.shape, dtype=bool)
    h = np.zeros_like(ell)

    for _ in range(POLAR_MAX_ITER):
        Z = 2.0 * LY - 2.0 * lam * ell[:, None]
        zmax = Z.max(axis=1)
        W = np.exp(Z - zmax[:, None])
        S = W.sum(axis=1)
        h = 0.5 * (zmax + np.log(S))
        dh = -np.sum(W * lam, axis=1) / S
        width = hi - lo
        done = (np.abs(h) <= POLAR_TOL) | (width <= 4e-16 * np.maximum(1.0, np.abs(ell)))
        if np.all(done):
            break
        lo = np.where(h > 0, ell, lo)
        hi = np.where(h > 0, hi, ell)
        step = ell - h / dh
        bad = ~((step > lo) & (step < hi))
        step = np.where(bad, 0.5 * (lo + hi), step)
        ell = np.where(done, ell, step)
    if not np.all(done):
        raise ConvergenceError("polar root finder", float(np.max(np.abs(h[~done]))))
    out[active] = np.exp(ell)
    return out


def polar(D, x):
    eig = _as_eig(D)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r = tau(eig, x)
    if r == 0.0:
        raise PolarOriginError()
    direction = eig_apply(eig, np.exp(-math.log(r) * eig.spectrum)) @ x
    return PolarPoint(r, direction)


def envelope_constants(m, a, b, r0, lam_min=None, lam_max=None):
    """Constants (C1, C2) for the small and large norm regimes of tau_envelope.

    Uses the effective bounds a' = min(a, 1/Lambda) and b' = max(b, 1/lambda) so
    the envelope holds for every exponent with spectrum in [1/b', 1/a'].
    """
    a_eff = min(a, 1.0 / lam_max) if lam_max else a
    b_eff = max(b, 1.0 / lam_min) if lam_min else b
    c0 = math.sqrt(m)
    gap = b_eff / a_eff - 1.0
    c_small = c0 * max(1.0, r0) ** gap
    c_large = c0 * max(1.0, 1.0 / r0) ** gap
    return c_small, c_large


def tau_envelope(D, x, a, b, r0):
    """Two-sided bounds lower <= tau_D(x) <= upper from norm equivalence.

    For ||x|| <= r0: (||x||/C1)^{1/lambda} <= tau <= (C1 ||x||)^{1/Lambda};
    for ||x|| >= r0: (||x||/C2)^{1/Lambda} <= tau <= (C2 ||x||)^{1/lambda}.
    """
    if not (0 < a <= b < 2):
        raise ValueError(f"need 0 < a <= b < 2, got a={a}, b={b}")
    if r0 <= 0:
        raise ValueError(f"need r0 > 0, got {r0}")
    eig = _as_eig(D)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = float(np.linalg.norm(x))
    if n == 0.0:
        return 0.0, 0.0
    lam, Lam = float(eig.spectrum[0]), float(eig.spectrum[-1])
    c_small, c_large = envelope_constants(x.size, a, b, r0, lam, Lam)
    if n <= r0:
        return (n / c_small) ** (1.0 / lam), (c_small * n) ** (1.0 / Lam)
    return (n / c_large) ** (1.0 / Lam), (c_large * n) ** (1.0 / lam)


def power_constants(m, b):
    """(C3, C4) = (m^{-b/2}, m^{b/2}) for the scaling bounds of tau under u -> gamma u."""
    return m ** (-b / 2.0), m ** (b / 2.0)

# quadrature.py - certified spatial quadrature over R^d
import math
import itertools
import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from errors import TailCertificationError
from settings import (
    GAUSS_NODES, MAX_SHELLS, MIN_DIVERGENCE_DEPTH, DIVERGENCE_RUN,
    MAX_REFINE_LEVEL, get_quad_tol,
)

logger = logging.getLogger(__name__)

# contribution ratios at or above this are treated as non-decaying
FLAT_RATIO = 1.0 - 1e-3


@dataclass
class IntegralResult:
    value: float
    error: float = 0.0
    divergent: bool = False
    n_nodes: int = 0
    truncated: bool = False

    @classmethod
    def diverged(cls, n_nodes=0):
        return cls(math.inf, math.inf, True, n_nodes)


class _Rule:
    """Tensor Gauss-Legendre rule; nodes are interior so box faces are never sampled."""

    def __init__(self, d, n=GAUSS_NODES):
        x, w = leggauss(n)
        self.d = d
        self.nodes = np.stack(np.meshgrid(*([x] * d), indexing="ij"), axis=-1).reshape(-1, d)
        self.weights = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), axis=-1).reshape(-1, d), axis=1)
        self.corners = np.array(list(itertools.product([0, 1], repeat=d)), dtype=float)

    def children(self, lo, hi):
        half = 0.5 * (hi - lo)
        return [(lo + c * half, lo + (c + 1.0) * half) for c in self.corners]

    def place(self, lo, hi):
        half = 0.5 * (hi - lo)
        return 0.5 * (lo + hi) + half * self.nodes, np.prod(half) * self.weights


class SpatialIntegrator:
    """Integrates f over R^d: a core box refined toward declared null points,
    then dyadic shells 2^k R0 <= ||s||_inf < 2^{k+1} R0.

    Near a null point and across shells the per-level contributions are
    tracked; a stable ratio rho < 1 closes the remainder geometrically,
    ratios >= 1 sustained over DIVERGENCE_RUN levels report divergence.
    """

    def __init__(self, fn, d, null_points=None, tol=None):
        self.fn = fn
        self.d = d
        self.rule = _Rule(d)
        self.tol = tol if tol is not None else get_quad_tol()
        pts = np.zeros((0, d)) if null_points is None else np.asarray(null_points, dtype=float)
        self.nulls = pts.reshape(-1, d)
        self.n_nodes = 0
        self.max_error_level = 14 if d == 1 else 6

    def _near(self, lo, hi):
        if self.nulls.shape[0] == 0:
            return False
        width = float(np.max(hi - lo))
        gap = np.maximum(np.maximum(lo - self.nulls, self.nulls - hi), 0.0)
        return bool(np.any(np.max(gap, axis=1) < width))

    def _evaluate(self, boxes):
        pts, wts, owners = [], [], []
        for i, (lo, hi) in enumerate(boxes):
            x, w = self.rule.place(lo, hi)
            pts.append(x)
            wts.append(w)
            owners.append((i, -1))
            for j, (clo, chi) in enumerate(self.rule.children(lo, hi)):
                x, w = self.rule.place(clo, chi)
                pts.append(x)
                wts.append(w)
                owners.append((i, j))
        values = np.asarray(self.fn(np.vstack(pts)), dtype=float)
        self.n_nodes += values.size
        size = self.rule.weights.size
        parents = np.zeros(len(boxes))
        kids = np.zeros(len(boxes))
        for k, (i, j) in enumerate(owners):
            part = float(np.dot(wts[k], values[k * size:(k + 1) * size]))
            if j < 0:
                parents[i] = part
            else:
                kids[i] += part
        return parents, kids, bool(np.all(np.isfinite(values)))

    def region(self, boxes):
        """Integral over a union of boxes. Returns (value, error, divergent)."""
        volume = sum(float(np.prod(hi - lo)) for lo, hi in boxes)
        parents, _, finite = self._evaluate(boxes)
        if not finite:
            return math.inf, math.inf, True
        scale = max(float(np.sum(np.abs(parents))), 1e-300)
        abs_tol = self.tol * scale
        total, err = 0.0, 0.0
        hist = []
        rhos = []
        rising = 0
        current = list(boxes)
        for level in range(MAX_REFINE_LEVEL):
            near = [b for b in current if self._near(*b)]
            far = [b for b in current if not self._near(*b)]
            accepted, nxt = 0.0, []
            if far:
                parents, kids, finite = self._evaluate(far)
                if not finite:
                    return math.inf, math.inf, True
                for (lo, hi), p, k in zip(far, parents, kids):
                    diff = abs(p - k)
                    share = float(np.prod(hi - lo)) / volume
                    if diff <= abs_tol * max(share, 1e-3) or level >= self.max_error_level:
                        accepted += k
                        err += diff
                    else:
                        nxt.extend(self.rule.children(lo, hi))
            only_near = not nxt
            total += accepted
            hist.append(abs(accepted))
            if not near and not nxt:
                return total, err, False
            if near and only_near and len(hist) >= 2:
                if hist[-1] > 0 and hist[-2] > 0:
                    rho = hist[-1] / hist[-2]
                    if rho >= FLAT_RATIO:
                        rising += 1
                        if level >= MIN_DIVERGENCE_DEPTH and rising >= DIVERGENCE_RUN:
                            return math.inf, math.inf, True
                    else:
                        rising = 0
                        rhos.append(rho)
                        remainder = accepted * rho / (1.0 - rho)
                        settled = len(rhos) >= 4 and all(abs(r - rho) <= 1e-4 * rho for r in rhos[-4:])
                        if abs(remainder) <= abs_tol or settled:
                            return total + remainder, err + abs(remainder), False
                elif hist[-1] == 0 and level >= MIN_DIVERGENCE_DEPTH:
                    near_est, _, finite = self._evaluate(near)
                    rest = float(np.sum(near_est))
                    if finite and abs(rest) <= abs_tol:
                        return total + rest, err + abs(rest), False
            for lo, hi in near:
                nxt.extend(self.rule.children(lo, hi))
            current = nxt
        if rising:
            return math.inf, math.inf, True
        logger.warning("refinement toward null points stopped at the maximal level")
        return total, err + hist[-1], False


def shell_boxes(d, inner):
    """Boxes tiling inner <= ||s||_inf < 2 inner."""
    edges = np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) * inner
    boxes = []
    for idx in itertools.product(range(4), repeat=d):
        if all(i in (1, 2) for i in idx):
            continue
        lo = np.array([edges[i] for i in idx])
        hi = np.array([edges[i + 1] for i in idx])
        boxes.append((lo, hi))
    return boxes


def integrate_spatial(fn, d, support_radius=None, tail_exponent=None, null_points=None,
                      tail_scale=1.0, tol=None):
    """Integral of a vectorized fn: (N, d) -> (N,) over R^d.

    ``tail_exponent`` is the decay exponent kappa of |fn| in tau_E(s) at infinity and
    ``tail_scale`` the largest eigenvalue of E. The exponent certifies the tail and
    caps the geometric extrapolation; divergence itself is read off the shells.
    Without a support radius or a tail exponent the remainder cannot be certified.
    """
    integ = SpatialIntegrator(fn, d, null_points, tol)
    if support_radius is None and tail_exponent is None:
        raise TailCertificationError()
    if support_radius is not None:
        r0 = float(support_radius)
    else:
        reach = float(np.max(np.abs(integ.nulls))) if integ.nulls.size else 0.0
        r0 = 1.0 if reach < 1.0 else 2.0 ** (math.floor(math.log2(reach)) + 1)
    core = [(-r0 * np.ones(d), r0 * np.ones(d))]
    value, err, div = integ.region(core)
    if div:
        return IntegralResult.diverged(integ.n_nodes)
    if support_radius is not None:
        return IntegralResult(value, err, False, integ.n_nodes)

    rho_hint = 2.0 ** (d + tail_exponent / tail_scale) if tail_exponent < 0 else math.inf
    prev, rising = None, 0
    rhos = []
    inner = r0
    for k in range(MAX_SHELLS):
        v, e, div = integ.region(shell_boxes(d, inner))
        if div:
            return IntegralResult.diverged(integ.n_nodes)
        value += v
        err += e
        inner *= 2.0
        if prev is not None:
            rho = abs(v) / prev if prev > 0 else (0.0 if v == 0 else math.inf)
            if rho >= FLAT_RATIO:
                rising += 1
                if k >= MIN_DIVERGENCE_DEPTH and rising >= DIVERGENCE_RUN:
                    return IntegralResult.diverged(integ.n_nodes)
            else:
                rising = 0
                rhos.append(rho)
                rho_c = max(rho, rho_hint) if rho_hint < 1.0 else rho
                remainder = v * rho_c / (1.0 - rho_c)
                settled = len(rhos) >= 3 and all(abs(r - rho) <= 1e-4 * rho for r in rhos[-3:])
                if settled:
                    remainder = v * rho / (1.0 - rho)
                    return IntegralResult(value + remainder, err + 1e-3 * abs(remainder), False, integ.n_nodes)
                if k >= 2 and abs(remainder) <= integ.tol * max(abs(value), 1e-300):
                    return IntegralResult(value + remainder, err + abs(remainder), False, integ.n_nodes)
                if v == 0.0 and prev == 0.0:
                    return IntegralResult(value, err, False, integ.n_nodes)
        prev = abs(v)
    if rho_hint < 1.0:
        remainder = abs(prev) * rho_hint / (1.0 - rho_hint)
        logger.warning(f"tail shells stopped at {MAX_SHELLS}; extrapolated remainder {remainder:.3e}")
        return IntegralResult(value + math.copysign(remainder, value), err + remainder, False,
                              integ.n_nodes, truncated=True)
    return IntegralResult.diverged(integ.n_nodes)

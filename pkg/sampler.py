# sampler.py - LePage series sampling, random measure increments, stochastic integrals and field paths
import json
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats
from scipy.stats import qmc

from errors import TailCertificationError
from fields import field_integrand
from integrand_space import fab_integral
from levy_cf import law_at, log_cf
from operator_core import eig_power, make_probes, spectral_bounds
from quadrature import SpatialIntegrator
from settings import (
    DEFAULT_N_TERMS, SAMPLE_CHUNK, GOF_BAND, GOF_MIN_N, GOF_Z, INDEPENDENCE_Z, get_threads,
    get_quad_tol,
)

logger = logging.getLogger(__name__)

SMALL_JUMP_MODES = ("gaussian", "drop")


# ---------- SEEDS AND CELLS ----------

@dataclass(frozen=True)
class SeedSpec:
    """Master seed; every task key maps to its own Philox stream."""
    master_seed: int = 0

    def generator(self, *task):
        ss = np.random.SeedSequence(self.master_seed, spawn_key=tuple(int(k) for k in task))
        return np.random.Generator(np.random.Philox(ss))


@dataclass
class CellPartition:
    """Axis-aligned grid of cells on the box [lower, upper)."""
    lower: np.ndarray
    upper: np.ndarray
    shape: tuple
    centers: np.ndarray = field(repr=False, default=None)
    volumes: np.ndarray = field(repr=False, default=None)

    @classmethod
    def grid(cls, lower, upper, cells):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise ValueError(f"empty partition box [{lower.tolist()}, {upper.tolist()})")
        shape = tuple(np.broadcast_to(np.asarray(cells, dtype=int), lower.shape).tolist())
        if min(shape) < 1:
            raise ValueError(f"need at least one cell per axis, got {shape}")
        axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for lo, hi, n in zip(lower, upper, shape)]
        centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lower.size)
        vol = float(np.prod((upper - lower) / np.array(shape)))
        return cls(lower, upper, shape, centers, np.full(centers.shape[0], vol))

    @property
    def d(self):
        return self.lower.size

    @property
    def n_cells(self):
        return self.centers.shape[0]

    def as_dict(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(), "cells": list(self.shape)}


# ---------- STANDARD LAW ----------

class LePageSampler:
    """Sum of the N largest jumps (Gamma_i / sigma_bar)^{-B} theta_i of the point law.

    The default ``small_jumps="gaussian"`` departs from pure truncation: the
    jumps beyond Gamma_N are replaced by a centred Gaussian with their exact
    covariance. Truncation alone leaves a tail variance of order
    (N / sigma_bar)^{1 - 2 lambda_min}, which does not pass the law
    goodness-of-fit when lambda_min is near 1/2. ``"drop"`` is pure
    truncation. ``tail_variance`` reports the dropped tail in both modes.
    """

    def __init__(self, law, n_terms=DEFAULT_N_TERMS, small_jumps="gaussian"):
        if n_terms < 1:
            raise ValueError(f"n_terms must be >= 1, got {n_terms}")
        if small_jumps not in SMALL_JUMP_MODES:
            raise ValueError(f"small_jumps must be one of {SMALL_JUMP_MODES}, got {small_jumps!r}")
        self.law = law
        self.n_terms = int(n_terms)
        self.small_jumps = small_jumps
        self.reps, wts = law.sigma.pairs()
        self.sbar = float(wts.sum())
        self.probs = wts / self.sbar
        self.O = law.eig.basis
        self.lam = law.eig.spectrum
        S = (law.sigma.directions.T * law.sigma.weights) @ law.sigma.directions
        self.C = (self.O.T @ S @ self.O) / (self.lam[:, None] + self.lam[None, :] - 1.0)
        ev, P = np.linalg.eigh(self.C)
        self.C_sqrt = P * np.sqrt(np.clip(ev, 0.0, None))

    @property
    def m(self):
        return self.lam.size

    @property
    def tail_variance(self):
        """Trace of the covariance of the jumps beyond the N-th, at Gamma_N = N."""
        r_n = self.sbar / self.n_terms
        return float(np.sum(np.diag(self.C) * r_n ** (2.0 * self.lam - 1.0)))

    def draw(self, rng, size):
        N = self.n_terms
        gam = np.cumsum(rng.standard_exponential((size, N)), axis=1)
        idx = rng.choice(len(self.reps), size=(size, N), p=self.probs)
        signs = rng.choice(np.array([-1.0, 1.0]), size=(size, N))
        Y = (self.reps[idx] * signs[..., None]) @ self.O
        r = self.sbar / gam
        Y = np.sum(Y * r[..., None] ** self.lam, axis=1)
        if self.small_jumps == "gaussian":
            r_n = r[:, -1]
            Z = rng.standard_normal((size, self.m)) @ self.C_sqrt.T
            Y += Z * r_n[:, None] ** (self.lam - 0.5)
        return Y @ self.O.T


def sample_standard(law, n_terms=DEFAULT_N_TERMS, seed=SeedSpec(), task=0, small_jumps="gaussian"):
    """One draw of the operator-stable vector with exponent B_s and spectral measure sigma."""
    sampler = LePageSampler(law, n_terms, small_jumps)
    return sampler.draw(seed.generator(task), 1)[0]


def standard_draws(law, n, n_terms=DEFAULT_N_TERMS, seed=SeedSpec(), small_jumps="gaussian"):
    """n independent draws, chunked so chunk k always uses stream k."""
    sampler = LePageSampler(law, n_terms, small_jumps)
    sizes = [min(SAMPLE_CHUNK, n - k) for k in range(0, n, SAMPLE_CHUNK)]

    def run(k):
        return sampler.draw(seed.generator(k), sizes[k])

    with ThreadPoolExecutor(max_workers=get_threads()) as pool:
        blocks = list(pool.map(run, range(len(sizes))))
    logger.debug(f"{n} draws with {n_terms} terms, tail variance {sampler.tail_variance:.3e}")
    return np.vstack(blocks) if blocks else np.zeros((0, sampler.m))


# ---------- RANDOM MEASURE ----------

class _CellLaws:
    def __init__(self, family, sigma, partition, n_terms, small_jumps):
        self.samplers = []
        self.scales = []
        for center, vol in zip(partition.centers, partition.volumes):
            law = law_at(family, sigma, center)
            self.samplers.append(LePageSampler(law, n_terms, small_jumps))
            self.scales.append(eig_power(law.eig, vol))

    def increments(self, seed, path):
        out = np.empty((len(self.samplers), self.samplers[0].m))
        for i, (smp, scale) in enumerate(zip(self.samplers, self.scales)):
            out[i] = scale @ smp.draw(seed.generator(path, i), 1)[0]
        return out


def sample_cell(family, sigma, cell, n_terms=DEFAULT_N_TERMS, seed=SeedSpec(), task=0,
                small_jumps="gaussian"):
    """M(A) for a cell (center, volume): volume^{B(center)} applied to a standard draw."""
    center, volume = cell
    if volume <= 0:
        raise ValueError(f"cell volume must be positive, got {volume}")
    law = law_at(family, sigma, np.atleast_1d(np.asarray(center, dtype=float)))
    x = LePageSampler(law, n_terms, small_jumps).draw(seed.generator(task), 1)[0]
    return eig_power(law.eig, volume) @ x


def cell_increments(family, sigma, partition, n_terms=DEFAULT_N_TERMS, seed=SeedSpec(), path=0,
                    small_jumps="gaussian"):
    """Independent increments M(A_i), cell i drawn from stream (path, i)."""
    return _CellLaws(family, sigma, partition, n_terms, small_jumps).increments(seed, path)


def cell_draws(family, sigma, partition, n_paths, n_terms=DEFAULT_N_TERMS, seed=SeedSpec(),
               small_jumps="gaussian"):
    """(n_paths, n_cells, m) array; path p equals cell_increments(..., path=p)."""
    laws = _CellLaws(family, sigma, partition, n_terms, small_jumps)
    if n_paths == 0:
        return np.zeros((0, partition.n_cells, laws.samplers[0].m))
    with ThreadPoolExecutor(max_workers=get_threads()) as pool:
        blocks = list(pool.map(lambda p: laws.increments(seed, p), range(n_paths)))
    return np.stack(blocks)


def coverage_deficit(f, partition, a, b):
    """Mass of int (||f||^a + ||f||^b) ds outside the partition box; None when it cannot be bounded."""
    if f.is_zero:
        return 0.0
    try:
        total = fab_integral(f, a=a, b=b)
    except TailCertificationError:
        return None
    if total.divergent:
        return math.inf

    def fn(S):
        norms = np.linalg.norm(f.evaluate(S), ord=2, axis=(1, 2))
        return norms ** a + norms ** b

    inside, _, _ = SpatialIntegrator(fn, f.d, f.null_points).region([(partition.lower, partition.upper)])
    return max(total.value - inside, 0.0)


def _warn_coverage(f, partition, a, b):
    missing = coverage_deficit(f, partition, a, b)
    if missing is None:
        logger.debug("coverage of the partition not checked: integrand has no tail hint")
    elif missing > max(get_quad_tol(), 1e-6):
        logger.warning(f"coverage deficiency: mass {missing:.3e} of the integrand lies outside the partition")
    return missing


def _bounds(family):
    if family.declared_a is not None and family.declared_b is not None:
        return family.declared_a, family.declared_b
    sb = spectral_bounds(family, make_probes(family.d, n_random=64))
    return sb.a_hat, sb.b_hat


def integrate(f, partition, family, sigma, n_terms=DEFAULT_N_TERMS, seed=SeedSpec(), path=0,
              small_jumps="gaussian", check_coverage=True):
    """Riemann sum sum_i f(center_i) M(A_i) for the stochastic integral I(f)."""
    if f.d != partition.d:
        raise ValueError(f"integrand lives on R^{f.d} but the partition on R^{partition.d}")
    if f.is_zero:
        return np.zeros(f.m)
    if check_coverage:
        _warn_coverage(f, partition, *_bounds(family))
    dM = cell_increments(family, sigma, partition, n_terms, seed, path, small_jumps)
    F = f.evaluate(partition.centers)
    return np.einsum("cij,cj->i", F, dM)


# ---------- FIELD PATHS ----------

@dataclass
class FieldSample:
    grid: np.ndarray
    paths: np.ndarray            # (n_paths, n_points, m)
    provenance: dict

    def to_frame(self):
        n_paths, n_points, m = self.paths.shape
        p, t, c = np.meshgrid(np.arange(n_paths), np.arange(n_points), np.arange(m), indexing="ij")
        return pd.DataFrame({
            "path": p.ravel(), "t_index": t.ravel(), "component": c.ravel(),
            "value": self.paths.ravel(),
        })

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def to_binary(self, path):
        """Raw little-endian float64 paths plus a JSON sidecar at ``path + '.json'``."""
        self.paths.astype("<f8").tofile(path)
        meta = {"shape": list(self.paths.shape), "dtype": "<f8",
                "grid": self.grid.tolist(), "provenance": self.provenance}
        with open(f"{path}.json", "w") as fh:
            json.dump(meta, fh, indent=2)

    @classmethod
    def from_binary(cls, path):
        with open(f"{path}.json") as fh:
            meta = json.load(fh)
        paths = np.fromfile(path, dtype="<f8").reshape(meta["shape"])
        return cls(np.asarray(meta["grid"], dtype=float), paths, meta["provenance"])


def sample_field(spec, grid, n_paths, partition, n_terms=DEFAULT_N_TERMS, seed=SeedSpec(),
                 small_jumps="gaussian", check_coverage=True):
    """Paths of X(t) = I(f(t, .)) on a t-grid, every t sharing one realization per path."""
    if n_paths < 0:
        raise ValueError(f"n_paths must be >= 0, got {n_paths}")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[1] != spec.d and grid.shape[0] == spec.d:
        grid = grid.T
    integrands = [field_integrand(spec, t) for t in grid]
    deficits = []
    if check_coverage:
        a, b = _bounds(spec.family)
        deficits = [_warn_coverage(f, partition, a, b) for f in integrands]
    F = np.stack([f.evaluate(partition.centers) for f in integrands])
    laws = _CellLaws(spec.family, spec.sigma, partition, n_terms, small_jumps)

    def run(path):
        return np.einsum("pcij,cj->pi", F, laws.increments(seed, path))

    with ThreadPoolExecutor(max_workers=get_threads()) as pool:
        blocks = list(pool.map(run, range(n_paths)))
    paths = np.stack(blocks) if blocks else np.zeros((0, grid.shape[0], spec.m))
    provenance = {
        "master_seed": seed.master_seed, "partition": partition.as_dict(),
        "n_terms": int(n_terms), "n_paths": int(n_paths), "small_jumps": small_jumps,
        "tail_variance": max(s.tail_variance for s in laws.samplers),
        "coverage_deficit": [None if x is None else float(x) for x in deficits],
        "coverage_warning": any(x is not None and x > max(get_quad_tol(), 1e-6) for x in deficits),
    }
    return FieldSample(grid, paths, provenance)


def replay(spec, sample):
    """Re-run sample_field from a FieldSample's provenance."""
    prov = sample.provenance
    part = prov["partition"]
    partition = CellPartition.grid(part["lower"], part["upper"], part["cells"])
    return sample_field(spec, sample.grid, prov["n_paths"], partition, prov["n_terms"],
                        SeedSpec(prov["master_seed"]), prov["small_jumps"], check_coverage=False)


# ---------- GOODNESS OF FIT ----------

@dataclass
class GofReport:
    n: int
    threshold: float
    table: pd.DataFrame

    @property
    def n_pass(self):
        return int(self.table["pass"].sum())

    @property
    def n_fail(self):
        return int(len(self.table) - self.n_pass)

    def passed(self, max_failures=2):
        return self.n_fail <= max_failures

    def as_dict(self):
        return {"n": self.n, "threshold": self.threshold, "n_pass": self.n_pass,
                "n_fail": self.n_fail, "points": self.table.to_dict(orient="records")}


def gof_points(m, n=50, radius=2.0, seed=0):
    """Quasi-random test points in [-radius, radius]^m, origin excluded."""
    h = qmc.Halton(d=m, scramble=True, seed=seed).random(n + 1)
    pts = radius * (2.0 * h - 1.0)
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-9]
    return pts[:n]


def cf_gof(sample, log_cf_theoretical, test_points):
    """Empirical CF against exp(log_cf) with threshold GOF_Z / sqrt(n) on each part."""
    X = np.atleast_2d(np.asarray(sample, dtype=float))
    if X.shape[0] == 1 and X.shape[1] >= GOF_MIN_N:
        X = X.T
    n = X.shape[0]
    if n < GOF_MIN_N:
        raise ValueError(f"goodness of fit needs n >= {GOF_MIN_N}, got {n}")
    thr = GOF_Z / math.sqrt(n)
    rows = []
    for u in np.atleast_2d(np.asarray(test_points, dtype=float)):
        phase = X @ u
        re, im = float(np.mean(np.cos(phase))), float(np.mean(np.sin(phase)))
        target = math.exp(log_cf_theoretical(u))
        rows.append({"u": u.tolist(), "ecf_re": re, "ecf_im": im, "target": target,
                     "dev_re": abs(re - target), "dev_im": abs(im),
                     "pass": abs(re - target) <= thr and abs(im) <= thr})
    return GofReport(n, thr, pd.DataFrame(rows))


def law_gof_points(law, n=50, band=GOF_BAND, scale=1.0, seed=0):
    """Points c^{B} theta whose scale * |psi| spreads log-uniformly over ``band``.

    Uses psi(c^{B} u) = c psi(u): every point sits where the CF is neither
    close to 1 nor close to 0.
    """
    lo, hi = band
    if not 0.0 < lo < hi:
        raise ValueError(f"band needs 0 < lo < hi, got {band}")
    m = law.sigma.m
    h = qmc.Halton(d=m + 1, scramble=True, seed=seed).random(n)
    z = stats.norm.ppf(np.clip(h[:, :m], 1e-12, 1 - 1e-12))
    thetas = z / np.linalg.norm(z, axis=1, keepdims=True)
    targets = lo * (hi / lo) ** h[:, m]
    pts = np.empty((n, m))
    for k, (theta, target) in enumerate(zip(thetas, targets)):
        base = -scale * log_cf(law, theta)
        if not base > 0.0:
            raise ValueError(f"psi vanishes in direction {theta.tolist()}")
        pts[k] = eig_power(law.eig, target / base) @ theta
    return pts


def law_gof(law, sample, n_points=50, band=GOF_BAND, scale=1.0, seed=0):
    """cf_gof against scale * psi of a point law at law-scaled test points."""
    pts = law_gof_points(law, n_points, band, scale, seed)
    return cf_gof(sample, lambda u: scale * log_cf(law, u), pts)


def independence_gof(first, second, test_pairs):
    """Joint ECF of (X1, X2) against the product of the marginal ECFs, threshold 5 / sqrt(n)."""
    X1 = np.atleast_2d(np.asarray(first, dtype=float))
    X2 = np.atleast_2d(np.asarray(second, dtype=float))
    if X1.shape[0] != X2.shape[0]:
        raise ValueError(f"paired samples differ in size: {X1.shape[0]} vs {X2.shape[0]}")
    n = X1.shape[0]
    if n < GOF_MIN_N:
        raise ValueError(f"independence check needs n >= {GOF_MIN_N}, got {n}")
    thr = INDEPENDENCE_Z / math.sqrt(n)
    rows = []
    for u1, u2 in test_pairs:
        p1 = X1 @ np.atleast_1d(np.asarray(u1, dtype=float))
        p2 = X2 @ np.atleast_1d(np.asarray(u2, dtype=float))
        joint = np.mean(np.exp(1j * (p1 + p2)))
        product = np.mean(np.exp(1j * p1)) * np.mean(np.exp(1j * p2))
        gap = float(abs(joint - product))
        rows.append({"u1": np.atleast_1d(u1).tolist(), "u2": np.atleast_1d(u2).tolist(),
                     "joint_re": float(joint.real), "product_re": float(product.real),
                     "gap": gap, "pass": gap <= thr})
    return GofReport(n, thr, pd.DataFrame(rows))


def empirical_moments(sample, powers):
    """E||X||^p estimates for each p."""
    norms = np.linalg.norm(np.atleast_2d(np.asarray(sample, dtype=float)), axis=1)
    return pd.Series({p: float(np.mean(norms ** p)) for p in powers})

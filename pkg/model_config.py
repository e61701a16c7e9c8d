# model_config.py - JSON model configuration and parametric function forms
import json
import math
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from errors import ConfigError, OpStableError
from fields import FieldSpec, field_integrand, phi_sum_powers
from integrand_space import IntegrandFamily
from levy_cf import SpectralMeasure
from operator_core import ExponentFamily, as_symmetric, make_probes, spectral_bounds
from sampler import CellPartition
from settings import PROBE_RADIUS_EXP, N_RANDOM_PROBES, DEFAULT_N_TERMS
from tangent import TangentSpec

logger = logging.getLogger(__name__)

SCALAR_FORMS = {"constant": 1, "rational_bump": 3, "exp_decay": 3, "step": 3, "tanh_ramp": 3}
MATRIX_FORMS = ("constant", "diagonal", "multistable", "scaled", "identity_scaled")
INTEGRAND_KINDS = ("field", "indicator", "diagonal_power")
TANGENT_KINDS = ("field", "measure", "additive")


# ---------- HELPERS ----------

def _get(node, key, path, kind=None, default=...):
    if not isinstance(node, dict):
        raise ConfigError(path or "<root>", "expected an object")
    where = f"{path}.{key}" if path else key
    if key not in node:
        if default is ...:
            raise ConfigError(where, "missing")
        return default
    value = node[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(where, f"expected {_kind_name(kind)}, got {type(value).__name__}")
    return value


def _kind_name(kind):
    if isinstance(kind, tuple):
        return " or ".join(k.__name__ for k in kind)
    return kind.__name__


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    return float(value)


def _vector(value, path, size=None):
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list of numbers")
    out = np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])
    if size is not None and out.size != size:
        raise ConfigError(path, f"expected {size} entries, got {out.size}")
    return out


def _matrix(value, path, size):
    if not isinstance(value, list) or len(value) != size:
        raise ConfigError(path, f"expected a {size}x{size} matrix")
    rows = [_vector(row, f"{path}[{i}]", size) for i, row in enumerate(value)]
    return np.vstack(rows)


# ---------- SCALAR FORMS ----------

def scalar_form(node, path):
    """Parametric scalar function of s: {"form": name, "coef": [...]}."""
    form = _get(node, "form", path, str)
    if form not in SCALAR_FORMS:
        raise ConfigError(f"{path}.form", f"unknown scalar form {form!r}, expected one of {sorted(SCALAR_FORMS)}")
    coef = _vector(_get(node, "coef", path, list), f"{path}.coef", SCALAR_FORMS[form])
    if form == "constant":
        c = coef[0]
        return lambda s: c
    c0, c1, c2 = coef
    if form in ("rational_bump", "tanh_ramp") and c2 <= 0:
        raise ConfigError(f"{path}.coef[2]", f"scale must be positive, got {c2}")
    if form == "exp_decay" and c2 < 0:
        raise ConfigError(f"{path}.coef[2]", f"rate must be nonnegative, got {c2}")
    if form == "rational_bump":
        return lambda s: c0 + c1 / (1.0 + (np.linalg.norm(np.atleast_1d(s)) / c2) ** 2)
    if form == "exp_decay":
        return lambda s: c0 + c1 * math.exp(-c2 * np.linalg.norm(np.atleast_1d(s)))
    if form == "step":
        return lambda s: c0 if np.atleast_1d(s)[0] < c2 else c1
    return lambda s: c0 + c1 * math.tanh(np.atleast_1d(s)[0] / c2)


# ---------- MATRIX FORMS ----------

@dataclass
class MatrixForm:
    """Parsed matrix form: ``fn`` maps s to an m x m matrix; ``scalar`` keeps alpha or delta."""
    name: str
    fn: object
    constant: bool = False
    value: Optional[np.ndarray] = None
    scalar: object = None


def matrix_form(node, path, m, base=None):
    """Matrix-valued function of s. ``scaled`` multiplies ``base`` (B) by delta(s)."""
    form = _get(node, "form", path, str)
    if form not in MATRIX_FORMS:
        raise ConfigError(f"{path}.form", f"unknown matrix form {form!r}, expected one of {list(MATRIX_FORMS)}")
    eye = np.eye(m)
    if form == "constant":
        M = _matrix(_get(node, "matrix", path, list), f"{path}.matrix", m)
        try:
            M = as_symmetric(M)
        except OpStableError as e:
            raise ConfigError(f"{path}.matrix", str(e))
        return MatrixForm(form, lambda s: M, constant=True, value=M)
    if form == "diagonal":
        entries = _get(node, "entries", path, list)
        if len(entries) != m:
            raise ConfigError(f"{path}.entries", f"expected {m} scalar forms, got {len(entries)}")
        fns = [scalar_form(e, f"{path}.entries[{i}]") for i, e in enumerate(entries)]
        return MatrixForm(form, lambda s: np.diag([f(s) for f in fns]))
    if form == "multistable":
        alpha = scalar_form(_get(node, "alpha", path, dict), f"{path}.alpha")
        return MatrixForm(form, lambda s: eye / alpha(s), scalar=alpha)
    delta = scalar_form(_get(node, "delta", path, dict), f"{path}.delta")
    if form == "identity_scaled":
        return MatrixForm(form, lambda s: delta(s) * eye, scalar=delta)
    if base is None:
        raise ConfigError(f"{path}.form", "scaled form needs the exponent B(s)")
    return MatrixForm(form, lambda s: delta(s) * base(s))


# ---------- MODEL CONFIG ----------

@dataclass
class ModelConfig:
    d: int
    m: int
    family: ExponentFamily
    sigma: SpectralMeasure
    field_spec: Optional[FieldSpec] = None
    require: list = field(default_factory=lambda: ["existence"])
    integrand: Optional[dict] = None
    cf_points: list = field(default_factory=list)
    sampling: dict = field(default_factory=dict)
    tangent: Optional[dict] = None
    settings: dict = field(default_factory=dict)
    seed: int = 0
    probes: Optional[np.ndarray] = field(default=None, repr=False)
    raw: dict = field(default_factory=dict, repr=False)


def load_config(path):
    """Read and validate a ModelConfig JSON file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config: {e.strerror}")
    if not text.strip():
        raise ConfigError(str(path), "config file is empty")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}", f"invalid JSON: {e.msg}")
    return parse_config(doc)


def _positive_int(node, key, path, default=...):
    value = _get(node, key, path, int, default)
    if isinstance(value, bool) or value < 1:
        raise ConfigError(f"{path}.{key}" if path else key, f"expected a positive integer, got {value!r}")
    return value


def _family(doc, d, m, probes):
    exponent = matrix_form(_get(doc, "exponent", "", dict), "exponent", m)
    D = None
    if "D" in doc:
        D = matrix_form(_get(doc, "D", "", dict), "D", m, base=exponent.fn)
    declared = _get(doc, "declared", "", dict, {})
    a = _number(declared["a"], "declared.a") if "a" in declared else None
    b = _number(declared["b"], "declared.b") if "b" in declared else None
    if a is not None and b is not None and not (0.0 < a <= b < 2.0):
        raise ConfigError("declared", f"need 0 < a <= b < 2, got a={a}, b={b}")
    if exponent.constant and (D is None or D.constant):
        family = ExponentFamily.constant_family(exponent.value, None if D is None else D.value, d, a, b)
    elif exponent.name == "multistable":
        family = ExponentFamily.multistable(exponent.scalar, m, d, None if D is None else D.fn, a, b)
    else:
        family = ExponentFamily(d=d, m=m, B=exponent.fn, D=None if D is None else D.fn,
                                declared_a=a, declared_b=b)
    if D is not None and D.name == "identity_scaled":
        family.delta = D.scalar
    try:
        sb = spectral_bounds(family, probes)
    except OpStableError as e:
        raise ConfigError("exponent", str(e))
    if not sb.within_declared:
        raise ConfigError("exponent", f"spectral bounds ({sb.a_hat:.6g}, {sb.b_hat:.6g}) violate 0 < a <= b < 2 "
                                      f"or the declared ({a}, {b})")
    if family.declared_a is None:
        family.declared_a = sb.a_hat
    if family.declared_b is None:
        family.declared_b = sb.b_hat
    return family


def _sigma(doc, m):
    atoms = _get(doc, "spectral_atoms", "", list, None)
    if atoms is None:
        logger.info(f"no spectral atoms given; using the {2 * m} axis atoms of unit weight")
        return SpectralMeasure.axis(m)
    pairs = []
    for i, atom in enumerate(atoms):
        where = f"spectral_atoms[{i}]"
        direction = _vector(_get(atom, "direction", where, list), f"{where}.direction", m)
        weight = _number(_get(atom, "weight", where), f"{where}.weight")
        pairs.append((direction, weight))
    try:
        return SpectralMeasure.from_atoms(pairs)
    except (OpStableError, ValueError) as e:
        raise ConfigError("spectral_atoms", str(e))


def _field(doc, family, sigma, probes):
    node = _get(doc, "field", "", dict, None)
    if node is None:
        return None
    flavor = _get(node, "flavor", "field", str, "two_sided")
    if flavor in ("two_sided", "one_sided") and family.D is None:
        raise ConfigError("D", f"{flavor} fields need the exponent D(s)")
    phi = None
    if "phi" in node:
        e = _vector(_get(_get(node, "phi", "field", dict), "e", "field.phi", list), "field.phi.e", family.d)
        try:
            phi = phi_sum_powers(e)
        except OpStableError as err:
            raise ConfigError("field.phi", str(err))
    weight = None
    if "weight" in node:
        weight = matrix_form(_get(node, "weight", "field", dict), "field.weight", family.m).fn
    b_plus = _number(_get(node, "b_plus", "field", default=1.0), "field.b_plus")
    b_minus = _number(_get(node, "b_minus", "field", default=0.0), "field.b_minus")
    try:
        return FieldSpec(family, sigma, flavor, phi, b_plus, b_minus, weight, probes)
    except (OpStableError, ValueError) as e:
        raise ConfigError("field", str(e))


def _settings(doc):
    node = _get(doc, "settings", "", dict, {})
    out = {}
    if "quad_tol" in node:
        tol = _number(node["quad_tol"], "settings.quad_tol")
        if not (0.0 < tol < 1e-2):
            raise ConfigError("settings.quad_tol", f"tolerance {tol} outside (0, 1e-2)")
        out["quad_tol"] = tol
    out["probe_radius_exp"] = _positive_int(node, "probe_radius_exp", "settings", PROBE_RADIUS_EXP)
    n_random = _get(node, "n_random_probes", "settings", int, N_RANDOM_PROBES)
    if n_random < 0:
        raise ConfigError("settings.n_random_probes", f"expected a nonnegative integer, got {n_random}")
    out["n_random_probes"] = n_random
    return out


def _sampling(doc, d):
    node = _get(doc, "sampling", "", dict, {})
    out = {"n_paths": _get(node, "n_paths", "sampling", int, 100),
           "cells": _positive_int(node, "cells", "sampling", 64),
           "n_terms": _positive_int(node, "n_terms", "sampling", DEFAULT_N_TERMS),
           "small_jumps": _get(node, "small_jumps", "sampling", str, "gaussian")}
    if out["n_paths"] < 0:
        raise ConfigError("sampling.n_paths", f"expected a nonnegative integer, got {out['n_paths']}")
    if out["small_jumps"] not in ("gaussian", "drop"):
        raise ConfigError("sampling.small_jumps", f"expected gaussian or drop, got {out['small_jumps']!r}")
    box = _get(node, "box", "sampling", list, [-8.0, 8.0])
    if len(box) != 2:
        raise ConfigError("sampling.box", "expected [lo, hi]")
    lo, hi = _number(box[0], "sampling.box[0]"), _number(box[1], "sampling.box[1]")
    if hi <= lo:
        raise ConfigError("sampling.box", f"empty box [{lo}, {hi}]")
    out["partition"] = CellPartition.grid(lo * np.ones(d), hi * np.ones(d), out["cells"])
    grid = _get(node, "grid", "sampling", list, None)
    if grid is None:
        out["grid"] = np.linspace(0.0, 1.0, 11)[:, None] * np.ones(d)
    else:
        out["grid"] = np.vstack([_vector(g, f"sampling.grid[{i}]", d) for i, g in enumerate(grid)])
    return out


def _box_integrand(node, path, d, m):
    lower = _vector(_get(node, "lower", path, list), f"{path}.lower", d)
    upper = _vector(_get(node, "upper", path, list), f"{path}.upper", d)
    matrix = _get(node, "matrix", path, list, None)
    A = np.eye(m) if matrix is None else _matrix(matrix, f"{path}.matrix", m)
    try:
        return IntegrandFamily.indicator(lower, upper, A)
    except ValueError as e:
        raise ConfigError(path, str(e))


def _diagonal_power(node, path, d, m):
    """diag(||s||^{-p_j(s)}) on ||s|| > cutoff; ``tie`` repeats the first entry on the diagonal."""
    powers = _get(node, "powers", path, list)
    if len(powers) != m:
        raise ConfigError(f"{path}.powers", f"expected {m} scalar forms, got {len(powers)}")
    fns = [scalar_form(p, f"{path}.powers[{i}]") for i, p in enumerate(powers)]
    cutoff = _number(_get(node, "cutoff", path, default=1.0), f"{path}.cutoff")
    if cutoff <= 0:
        raise ConfigError(f"{path}.cutoff", f"cutoff must be positive, got {cutoff}")
    if _get(node, "tie", path, bool, False):
        fns = [fns[0]] * m

    def fn(s):
        r = float(np.linalg.norm(s))
        if r <= cutoff:
            return np.zeros((m, m))
        return np.diag([r ** (-p(s)) for p in fns])

    far = [cutoff * 2.0 ** k * np.eye(d)[0] for k in range(1, 12)]
    tail = -min(p(s) for p in fns for s in far)
    corners = np.vstack([cutoff * np.eye(d), -cutoff * np.eye(d)])
    return IntegrandFamily(d=d, m=m, fn=fn, tail_exponent=tail, null_points=corners)


def build_integrand(cfg, node=None, path="integrand"):
    """Integrand named by the ``integrand`` selector."""
    node = cfg.integrand if node is None else node
    if node is None:
        raise ConfigError(path, "missing")
    kind = _get(node, "kind", path, str)
    if kind not in INTEGRAND_KINDS:
        raise ConfigError(f"{path}.kind", f"unknown integrand kind {kind!r}, expected one of {list(INTEGRAND_KINDS)}")
    if kind == "indicator":
        return _box_integrand(node, path, cfg.d, cfg.m)
    if kind == "diagonal_power":
        return _diagonal_power(node, path, cfg.d, cfg.m)
    if cfg.field_spec is None:
        raise ConfigError("field", "field integrands need a field section")
    t = _vector(_get(node, "t", path, list), f"{path}.t", cfg.d)
    return field_integrand(cfg.field_spec, t)


def build_tangent(cfg, u=None):
    """TangentSpec from the ``tangent`` section; ``u`` overrides the configured point."""
    node = cfg.tangent
    if node is None:
        raise ConfigError("tangent", "missing")
    kind = _get(node, "kind", "tangent", str, "field")
    if kind not in TANGENT_KINDS:
        raise ConfigError("tangent.kind", f"unknown tangent kind {kind!r}, expected one of {list(TANGENT_KINDS)}")
    if u is None:
        u = _vector(_get(node, "u", "tangent", list), "tangent.u", cfg.d)
    default_times, default_thetas = TangentSpec.default_probe(cfg.d, cfg.m)
    thetas = _get(node, "thetas", "tangent", list, None)
    thetas = default_thetas if thetas is None else \
        [_vector(th, f"tangent.thetas[{i}]", cfg.m) for i, th in enumerate(thetas)]
    try:
        if kind == "measure":
            fns = [_box_integrand(f, f"tangent.functions[{i}]", cfg.d, cfg.m)
                   for i, f in enumerate(_get(node, "functions", "tangent", list))]
            return TangentSpec("measure", u, thetas[:len(fns)], fns=fns, family=cfg.family, sigma=cfg.sigma)
        times = _get(node, "times", "tangent", list, None)
        times = default_times if times is None else \
            [_vector(t, f"tangent.times[{i}]", cfg.d) for i, t in enumerate(times)]
        thetas = thetas[:len(times)]
        if kind == "field":
            if cfg.field_spec is None:
                raise ConfigError("field", "field tangents need a field section")
            return TangentSpec("field", u, thetas, times=times, field_spec=cfg.field_spec)
        weight = None
        if "weight" in node:
            weight = matrix_form(node["weight"], "tangent.weight", cfg.m).fn
        return TangentSpec("additive", u, thetas, times=times, family=cfg.family, sigma=cfg.sigma, weight=weight)
    except ValueError as e:
        raise ConfigError("tangent", str(e))


def parse_config(doc):
    """Validate a decoded ModelConfig document."""
    if not isinstance(doc, dict) or not doc:
        raise ConfigError("<root>", "config must be a non-empty JSON object")
    d = _positive_int(doc, "d", "")
    m = _positive_int(doc, "m", "")
    settings = _settings(doc)
    probes = make_probes(d, settings["probe_radius_exp"], settings["n_random_probes"])
    family = _family(doc, d, m, probes)
    sigma = _sigma(doc, m)
    field_spec = _field(doc, family, sigma, probes)
    require = _get(doc, "require", "", list, ["existence"])
    for i, name in enumerate(require):
        if not isinstance(name, str):
            raise ConfigError(f"require[{i}]", f"expected a verdict name, got {name!r}")
    cf_points = []
    for i, point in enumerate(_get(_get(doc, "cf", "", dict, {}), "points", "cf", list, [])):
        where = f"cf.points[{i}]"
        cf_points.append((_vector(_get(point, "s", where, list), f"{where}.s", d),
                          _vector(_get(point, "u", where, list), f"{where}.u", m)))
    seed = _get(doc, "seed", "", int, 0)
    if seed < 0:
        raise ConfigError("seed", f"expected a nonnegative integer, got {seed}")
    return ModelConfig(
        d=d, m=m, family=family, sigma=sigma, field_spec=field_spec, require=require,
        integrand=_get(doc, "integrand", "", dict, None), cf_points=cf_points,
        sampling=_sampling(doc, d), tangent=_get(doc, "tangent", "", dict, None),
        settings=settings, seed=seed, probes=probes, raw=doc,
    )

import json
import math

import numpy as np
import pytest

from fields import FieldSpec, phi_sum_powers
from levy_cf import SpectralMeasure
from operator_core import ExponentFamily

EPS = math.sqrt(7.0) / 12.0


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("OPSTABLE_TOL", "OPSTABLE_LOG_FILE"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("OPSTABLE_THREADS", "2")


@pytest.fixture
def axis1():
    return SpectralMeasure.axis(1)


@pytest.fixture
def axis2():
    return SpectralMeasure.axis(2)


@pytest.fixture
def scalar_family():
    """alpha = 1.5 with D = 0.6 on R."""
    return ExponentFamily.constant_family(np.eye(1) / 1.5, np.eye(1) * 0.6, d=1)


def two_sided(B, D, m):
    family = ExponentFamily.constant_family(np.asarray(B, dtype=float), np.asarray(D, dtype=float), d=1)
    return FieldSpec(family, SpectralMeasure.axis(m), "two_sided", phi_sum_powers([1.0]),
                     probes=np.array([[0.0], [1.0]]))


@pytest.fixture
def coupled_spec():
    """B = diag(1, 1.5) with a non-commuting D: C1 holds, C2 does not."""
    D = np.array([[0.25, EPS], [EPS, 0.75]])
    return two_sided(np.diag([1.0, 1.5]), D, 2)


@pytest.fixture
def commuting_spec():
    """B = diag(1, 1.5), D = 0.25 I: C2 holds, C1 does not."""
    return two_sided(np.diag([1.0, 1.5]), np.diag([0.25, 0.25]), 2)


@pytest.fixture
def scalar_spec(scalar_family, axis1):
    return FieldSpec(scalar_family, axis1, "two_sided", phi_sum_powers([1.0]), probes=np.array([[0.0], [1.0]]))


SCALAR_CONFIG = {
    "d": 1,
    "m": 1,
    "exponent": {"form": "constant", "matrix": [[1.0 / 1.5]]},
    "D": {"form": "constant", "matrix": [[0.6]]},
    "field": {"flavor": "two_sided", "phi": {"e": [1.0]}},
    "integrand": {"kind": "indicator", "lower": [0.0], "upper": [1.0]},
    "cf": {"points": [{"s": [0.0], "u": [1.0]}, {"s": [3.0], "u": [-2.0]}]},
    "tangent": {"kind": "field", "u": [0.0], "times": [[0.5], [1.0]], "thetas": [[1.0], [-0.5]]},
    "sampling": {"n_paths": 4, "cells": 16, "box": [-4.0, 4.0], "n_terms": 16,
                 "grid": [[0.0], [0.5], [1.0]]},
    "settings": {"probe_radius_exp": 3, "n_random_probes": 16},
    "seed": 11,
}


@pytest.fixture
def write_config(tmp_path):
    def write(doc, name="model.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
        return str(path)

    return write


@pytest.fixture
def scalar_config():
    return json.loads(json.dumps(SCALAR_CONFIG))

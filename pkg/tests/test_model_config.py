import math

import numpy as np
import pytest

from errors import ConfigError
from model_config import build_integrand, build_tangent, load_config, matrix_form, parse_config, scalar_form


def test_scalar_forms():
    assert scalar_form({"form": "constant", "coef": [1.2]}, "x")([5.0]) == 1.2
    bump = scalar_form({"form": "rational_bump", "coef": [1.0, 0.5, 2.0]}, "x")
    assert bump([0.0]) == pytest.approx(1.5)
    assert bump([2.0]) == pytest.approx(1.25)
    decay = scalar_form({"form": "exp_decay", "coef": [1.0, 1.0, 1.0]}, "x")
    assert decay([-1.0]) == pytest.approx(1.0 + math.exp(-1.0))
    step = scalar_form({"form": "step", "coef": [1.2, 1.8, 0.3]}, "x")
    assert step([0.0]) == 1.2 and step([0.3]) == 1.8
    ramp = scalar_form({"form": "tanh_ramp", "coef": [1.5, 0.2, 1.0]}, "x")
    assert ramp([0.0]) == pytest.approx(1.5)


@pytest.mark.parametrize("node, where", [
    ({"form": "wave", "coef": [1.0]}, "alpha.form"),
    ({"form": "step", "coef": [1.0]}, "alpha.coef"),
    ({"form": "tanh_ramp", "coef": [1.0, 1.0, 0.0]}, "alpha.coef[2]"),
    ({"coef": [1.0]}, "alpha.form"),
    ({"form": "constant", "coef": ["x"]}, "alpha.coef[0]"),
])
def test_scalar_form_errors_name_the_field(node, where):
    with pytest.raises(ConfigError) as err:
        scalar_form(node, "alpha")
    assert err.value.path == where


def test_matrix_forms():
    diag = matrix_form({"form": "diagonal", "entries": [{"form": "constant", "coef": [1.0]},
                                                        {"form": "constant", "coef": [2.0]}]}, "B", 2)
    assert np.allclose(diag.fn([0.0]), np.diag([1.0, 2.0]))
    multi = matrix_form({"form": "multistable", "alpha": {"form": "constant", "coef": [1.6]}}, "B", 2)
    assert np.allclose(multi.fn([0.0]), np.eye(2) / 1.6)
    scaled = matrix_form({"form": "scaled", "delta": {"form": "constant", "coef": [0.5]}}, "D", 2,
                         base=lambda s: np.eye(2) * 0.8)
    assert np.allclose(scaled.fn([0.0]), np.eye(2) * 0.4)
    with pytest.raises(ConfigError) as err:
        matrix_form({"form": "constant", "matrix": [[1.0, 0.5], [0.0, 1.0]]}, "B", 2)
    assert err.value.path == "B.matrix"
    with pytest.raises(ConfigError):
        matrix_form({"form": "scaled", "delta": {"form": "constant", "coef": [0.5]}}, "D", 2)


def test_load_scalar_config(write_config, scalar_config):
    cfg = load_config(write_config(scalar_config))
    assert (cfg.d, cfg.m, cfg.seed) == (1, 1, 11)
    assert cfg.family.constant
    assert cfg.family.declared_a == pytest.approx(1.5)
    assert cfg.family.declared_b == pytest.approx(1.5)
    assert cfg.field_spec.flavor == "two_sided"
    assert len(cfg.cf_points) == 2
    assert cfg.sampling["partition"].n_cells == 16
    assert cfg.sampling["grid"].shape == (3, 1)
    assert cfg.require == ["existence"]


def test_empty_and_malformed_files(write_config, tmp_path):
    with pytest.raises(ConfigError, match="empty"):
        load_config(write_config("   \n"))
    with pytest.raises(ConfigError) as err:
        load_config(write_config('{"d": 1,\n "m": }'))
    assert err.value.path.endswith(":2:7")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        parse_config({})


@pytest.mark.parametrize("edit, where", [
    (lambda c: c.pop("D"), "D"),
    (lambda c: c.update(seed=-1), "seed"),
    (lambda c: c.update(declared={"a": 1.8, "b": 1.2}), "declared"),
    (lambda c: c.update(exponent={"form": "constant", "matrix": [[0.4]]}), "exponent"),
    (lambda c: c["sampling"].update(small_jumps="keep"), "sampling.small_jumps"),
    (lambda c: c["sampling"].update(box=[1.0, -1.0]), "sampling.box"),
    (lambda c: c["settings"].update(quad_tol=0.5), "settings.quad_tol"),
    (lambda c: c.update(require=["C1", 3]), "require[1]"),
    (lambda c: c["cf"]["points"][1].update(u=[1.0, 2.0]), "cf.points[1].u"),
])
def test_config_errors_name_the_field(scalar_config, edit, where):
    edit(scalar_config)
    with pytest.raises(ConfigError) as err:
        parse_config(scalar_config)
    assert err.value.path == where


def test_build_integrands(scalar_config):
    cfg = parse_config(scalar_config)
    box = build_integrand(cfg)
    assert box.at([0.5])[0, 0] == 1.0
    assert box.support_radius == 1.0
    f = build_integrand(cfg, {"kind": "field", "t": [1.0]})
    mu = 0.6 - 1.0 / 1.5
    assert f.at([-2.0])[0, 0] == pytest.approx(3.0 ** mu - 2.0 ** mu)
    power = build_integrand(cfg, {"kind": "diagonal_power", "powers": [{"form": "constant", "coef": [2.0]}]})
    assert power.at([2.0])[0, 0] == pytest.approx(0.25)
    assert power.at([0.5])[0, 0] == 0.0
    assert power.tail_exponent == pytest.approx(-2.0)
    with pytest.raises(ConfigError):
        build_integrand(cfg, {"kind": "spline"})


def test_field_integrand_needs_a_field(scalar_config):
    scalar_config.pop("field")
    cfg = parse_config(scalar_config)
    assert cfg.field_spec is None
    with pytest.raises(ConfigError) as err:
        build_integrand(cfg, {"kind": "field", "t": [1.0]})
    assert err.value.path == "field"


def test_build_tangents(scalar_config):
    cfg = parse_config(scalar_config)
    tspec = build_tangent(cfg)
    assert tspec.kind == "field"
    assert tspec.n == 2
    assert build_tangent(cfg, u=np.array([0.5])).u.tolist() == [0.5]
    cfg.tangent = {"kind": "measure", "u": [0.0], "functions": [{"lower": [0.0], "upper": [1.0]}]}
    assert build_tangent(cfg).n == 1
    cfg.tangent = {"kind": "additive", "u": [0.0], "times": [[1.0]], "thetas": [[1.0]]}
    assert build_tangent(cfg).kind == "additive"
    cfg.tangent = {"kind": "spiral", "u": [0.0]}
    with pytest.raises(ConfigError):
        build_tangent(cfg)
    cfg.tangent = None
    with pytest.raises(ConfigError):
        build_tangent(cfg)

import numpy as np
import pytest

from kblab.model import (
    ConfigError,
    ExperimentConfig,
    GaussianBelief,
    ModelValidationError,
    config_equal,
    constant_model,
    eval_coefficients,
    parse_config,
    periodic_model,
    rotation_damped_model,
    serialize_config,
    validate_config,
)
from kblab.scenarios import SCENARIOS, builtin_scenario


def test_constant_schedule_at_arbitrary_time():
    mdl = constant_model(np.zeros((2, 2)), np.eye(2), np.eye(2), F=np.eye(2))
    co = eval_coefficients(mdl, 3.7)
    assert np.all(co.A == 0)
    assert np.array_equal(co.C, np.eye(2))
    assert np.array_equal(co.R, np.eye(2))
    assert np.array_equal(co.R_inv, np.eye(2))
    assert np.array_equal(co.F, np.eye(2))


def test_periodic_sine_peak():
    mdl = periodic_model([[0.0]], [[1.0]], C=[[1.0]], R=[[1.0]], omega=1.0)
    assert eval_coefficients(mdl, np.pi / 2).A[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_rotation_family_generator():
    mdl = rotation_damped_model(omega=1.0, damping=0.0)
    for t in (0.0, 1.3, 7.7):
        assert np.array_equal(eval_coefficients(mdl, t).A, [[0.0, 1.0], [-1.0, 0.0]])
    damped = rotation_damped_model(omega=2.0, damping=0.5)
    assert np.array_equal(damped.A0, [[-0.5, 2.0], [-2.0, -0.5]])


def test_rotation_family_rejects_wrong_dimension():
    with pytest.raises(ModelValidationError):
        rotation_damped_model(1.0, 0.0, C=np.eye(3), R=np.eye(3))


def test_singular_r_names_time():
    mdl = periodic_model([[0.0]], [[0.0]], C=[[1.0]], R=[[0.5]], R1=[[-0.5]],
                         omega=1.0)
    with pytest.raises(ModelValidationError, match="t="):
        eval_coefficients(mdl, np.pi / 2)  # R(pi/2) = 0


def test_negative_time_rejected():
    mdl = constant_model([[0.0]], [[1.0]], [[1.0]])
    with pytest.raises(ModelValidationError):
        eval_coefficients(mdl, -0.5)


def test_rinv_product_identity():
    cfg = builtin_scenario("periodic3")
    worst = 0.0
    for t in np.linspace(0, 10, 23):
        co = eval_coefficients(cfg.model, t)
        worst = max(worst, np.abs(co.R @ co.R_inv - np.eye(3)).max())
    assert worst <= 1e-12


def test_validate_flags_singular_p0():
    cfg = builtin_scenario("scalar_basic")
    from dataclasses import replace

    rep = validate_config(replace(cfg, P0=np.zeros((1, 1))))
    assert any("P0 not invertible" in m for m in rep.messages)


def test_validate_flags_bad_atom_weights():
    cfg = builtin_scenario("two_atom")
    from dataclasses import replace

    rep = validate_config(replace(cfg, atoms=(([1.0], 0.5), ([-1.0], 0.6))))
    assert any("sum 1.1" in m for m in rep.messages)


def test_validate_flags_indefinite_r_schedule():
    mdl = periodic_model([[0.0]], [[0.0]], C=[[1.0]], R=[[0.5]], R1=[[-1.0]], omega=1.0)
    cfg = ExperimentConfig(model=mdl, horizon=10.0, dt=0.01, m0=[0.0], P0=[[1.0]])
    rep = validate_config(cfg)
    assert any("R(t) not positive definite" in m for m in rep.messages)


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_builtin_scenarios_validate_clean(name):
    assert validate_config(builtin_scenario(name)).ok


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_config_roundtrip(name):
    cfg = builtin_scenario(name)
    again = parse_config(serialize_config(cfg))
    assert config_equal(cfg, again)
    # a second trip is byte-stable
    assert serialize_config(again) == serialize_config(cfg)


def test_minimal_scalar_document():
    cfg = parse_config("[model]\nm = 1\n")
    assert cfg.model.m == 1 and cfg.model.n == 1
    assert cfg.atoms == ()
    assert cfg.model.family == "constant"


def test_dimension_mismatch_reports_line():
    text = "[model]\nm = 2\nn = 2\nC0.shape = 2 3\nC0.data = 1 2 3 4 5 6\n"
    with pytest.raises(ConfigError, match=r"line 4.*dimension mismatch"):
        parse_config(text)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError, match=r"line 3.*unknown key"):
        parse_config("[model]\nm = 1\nwhatever = 3\n")


def test_malformed_number_reports_line():
    with pytest.raises(ConfigError, match=r"malformed number"):
        parse_config("[model]\nm = 1\n[run]\ndt = fast\n")


def test_atoms_parse_in_order():
    cfg = builtin_scenario("rotation_atoms")
    text = serialize_config(cfg)
    again = parse_config(text)
    assert len(again.atoms) == 3
    for (xa, wa), (xb, wb) in zip(cfg.atoms, again.atoms):
        assert np.array_equal(xa, xb) and wa == wb


def test_gaussian_belief_symmetrizes_and_floors():
    b = GaussianBelief(0.0, [1.0, 2.0], np.array([[1.0, 2e-13], [0.0, 1.0]]))
    assert np.array_equal(b.cov, b.cov.T)
    with pytest.raises(ModelValidationError):
        GaussianBelief(0.0, [0.0], [[-1.0]])
    with pytest.raises(ModelValidationError):
        GaussianBelief(0.0, [0.0, 0.0], np.array([[1.0, 0.5], [-0.5, 1.0]]))

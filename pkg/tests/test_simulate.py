from dataclasses import replace

import numpy as np
import pytest

from kblab.model import constant_model
from kblab.propagate import make_grid
from kblab.simulate import (
    RngStream,
    draw_initial_state,
    fine_grid,
    generate_observation_path,
    simulate_observations,
    simulate_truth,
)
from kblab.scenarios import builtin_scenario


def test_rng_streams_are_independent_and_stable():
    a = RngStream(42, "W").generator().standard_normal(8)
    b = RngStream(42, "W").generator().standard_normal(8)
    c = RngStream(42, "V").generator().standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    d = RngStream(43, "W").generator().standard_normal(8)
    assert not np.array_equal(a, d)


def test_observation_path_regenerates_bitwise():
    cfg = builtin_scenario("scalar_basic")
    a = generate_observation_path(cfg, seed=42)
    b = generate_observation_path(cfg, seed=42)
    assert np.array_equal(a.increments, b.increments)
    assert np.array_equal(a.truth, b.truth)


def test_degenerate_initial_draw():
    cfg = replace(builtin_scenario("scalar_basic"), P0=np.zeros((1, 1)))
    x = draw_initial_state(cfg, RngStream(0, "x0").generator())
    assert np.array_equal(x, cfg.m0)


def test_atom_draw_frequency_within_binomial_band():
    cfg = replace(builtin_scenario("two_atom"), P0=np.zeros((1, 1)), m0=np.zeros(1))
    rng = RngStream(123, "x0").generator()
    n = 10_000
    draws = np.array([draw_initial_state(cfg, rng)[0] for _ in range(n)])
    assert set(np.unique(draws)) == {-1.0, 1.0}
    freq = np.mean(draws > 0)
    assert abs(freq - 0.5) <= 3.0 * np.sqrt(0.25 / n)


def test_truth_constant_dynamics():
    mdl = constant_model([[0.0]], [[1.0]], [[1.0]])
    tr = simulate_truth(mdl, [2.5], make_grid(3.0, 0.01))
    assert np.abs(tr - 2.5).max() == 0.0


def test_truth_scalar_exponential():
    mdl = constant_model([[1.0]], [[1.0]], [[1.0]])
    tr = simulate_truth(mdl, [1.0], make_grid(1.0, 1e-3))
    assert abs(tr[-1, 0] - np.e) <= 1e-9


def test_truth_noise_requires_rng():
    mdl = constant_model([[0.0]], [[1.0]], [[1.0]])
    with pytest.raises(ValueError):
        simulate_truth(mdl, [0.0], make_grid(1.0, 0.1), eps=0.1)


def test_em_terminal_variance_matches_eps2_t():
    mdl = constant_model([[0.0]], [[1.0]], [[1.0]])
    fg = fine_grid(make_grid(1.0, 0.05), 5)
    eps, n = 0.3, 500
    xs = [simulate_truth(mdl, [0.0], fg, eps=eps, rng=RngStream(s, "V").generator())[-1, 0]
          for s in range(n)]
    var = np.var(xs, ddof=1)
    target = eps * eps
    assert abs(var - target) <= 3.0 * target * np.sqrt(2.0 / (n - 1))


def test_observation_noise_variance():
    mdl = constant_model([[0.0]], [[0.0]], [[0.25]])
    grid = make_grid(50.0, 0.01)
    fg = fine_grid(grid, 4)
    tr = simulate_truth(mdl, [0.0], fg)
    obs = simulate_observations(mdl, tr, fg, 4, RngStream(5, "W").generator())
    var = np.var(obs.increments[:, 0], ddof=1)
    target = 0.25 * 0.01
    assert abs(var - target) <= 3.0 * target * np.sqrt(2.0 / (obs.n_steps - 1))


def test_noiseless_hook_exact_quadrature():
    mdl = constant_model([[0.0]], [[1.0]], [[1.0]])
    grid = make_grid(1.0, 0.01)
    fg = fine_grid(grid, 10)
    tr = simulate_truth(mdl, [1.0], fg)
    obs = simulate_observations(mdl, tr, fg, 10, None)
    assert np.abs(obs.increments - 0.01).max() <= 1e-15


def test_substep_refinement_changes_noiseless_increments_little():
    cfg = replace(builtin_scenario("scalar_unstable"), horizon=2.0)
    one = generate_observation_path(cfg, noise_off=True)
    ten = generate_observation_path(replace(cfg, substeps=10), noise_off=True)
    assert np.abs(one.increments - ten.increments).max() <= 1e-7


def test_fine_grid_structure():
    grid = make_grid(1.0, 0.25)
    fg = fine_grid(grid, 4)
    assert len(fg) == 17
    assert np.array_equal(fg[::4], grid)
    assert np.array_equal(fine_grid(grid, 1), grid)


def test_observation_path_shape_contract():
    cfg = builtin_scenario("rotation_atoms")
    obs = generate_observation_path(cfg, seed=1)
    assert obs.increments.shape == (len(obs.grid) - 1, 2)
    assert obs.truth.shape == (len(obs.grid), 2)


def test_eps_zero_consumes_no_system_noise():
    # identical observations regardless of how the V stream would be seeded
    cfg = builtin_scenario("scalar_basic")
    a = generate_observation_path(cfg, seed=7, eps=0.0)
    b = generate_observation_path(cfg, seed=7, eps=0.0)
    assert np.array_equal(a.increments, b.increments)
    assert np.array_equal(a.truth, b.truth)

"""Seeded generation of truth trajectories and observation increment paths.

Randomness comes from labeled counter-based streams (numpy Philox keyed by a
64-bit seed and the SHA-256 digest of the stream label), so distinct labels
("x0", "V", "W") are independent and every path regenerates bitwise under the
same seed and substep count. Deterministic dynamics (eps = 0) consume no
system-noise draws at all.

Observation increments dy_k (not cumulative y) are the canonical
representation; the drift part int C x ds is accumulated with the composite
trapezoid rule on the fine substep grid, the noise part is the sum of
R^{1/2} sqrt(h) xi over substeps.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ._integrators import accumulate_transitions, make_grid, transition_steps
from .model import ExperimentConfig, LtvModel
from .riccati import psd_sqrt


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "little")


def _psd_sqrt_path(mats: np.ndarray) -> np.ndarray:
    """Symmetric PSD square roots along a path (one batched eigh call)."""
    if np.ptp(mats, axis=0).max() == 0.0:
        return np.broadcast_to(psd_sqrt(mats[0]), mats.shape)
    sym = 0.5 * (mats + np.swapaxes(mats, 1, 2))
    w, v = np.linalg.eigh(sym)
    return (v * np.sqrt(np.clip(w, 0.0, None))[:, None, :]) @ np.swapaxes(v, 1, 2)


@dataclass
class RngStream:
    """An independent, reproducible random stream identified by (seed, label)."""

    seed: int
    label: str

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(_label_key(self.label),))
        return np.random.Generator(np.random.Philox(ss))


@dataclass
class ObservationPath:
    """Coarse-grid observation increments plus the generating truth trajectory."""

    grid: np.ndarray            # coarse grid, K+1 nodes
    increments: np.ndarray      # (K, n) observation increments dy_k
    truth: np.ndarray           # (K+1, m) state at the coarse nodes
    substeps: int
    seed: int
    eps: float

    def __post_init__(self):
        if self.increments.shape[0] != self.grid.shape[0] - 1:
            raise ValueError("one increment per coarse step is required")

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]


def fine_grid(grid: np.ndarray, substeps: int) -> np.ndarray:
    """Subdivide each coarse step into `substeps` equal pieces."""
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if substeps == 1:
        return np.asarray(grid, dtype=float)
    lo = grid[:-1]
    h = (grid[1:] - grid[:-1]) / substeps
    offs = np.arange(substeps) * h[:, None]
    fine = (lo[:, None] + offs).reshape(-1)
    return np.append(fine, grid[-1])


def draw_initial_state(cfg: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw x0 = m0 + L xi (+ an atom location with its configured probability).

    L is the symmetric PSD square-root factor of P0, so P0 = 0 degenerates to
    the deterministic m0. The Gaussian draw happens before the atom pick so
    the stream consumption pattern is fixed.
    """
    m = cfg.model.m
    root = psd_sqrt(cfg.P0)
    x = cfg.m0 + root @ rng.standard_normal(m)
    if cfg.atoms:
        u = rng.random()
        acc = 0.0
        pick = cfg.atoms[-1][0]
        for xi, w in cfg.atoms:
            acc += w
            if u < acc:
                pick = xi
                break
        x = x + pick
    return x


def simulate_truth(model: LtvModel, x0, grid, eps: float = 0.0,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Integrate the signal process on the given grid.

    eps = 0: one RK4 transition per grid step (deterministic, no RNG use).
    eps > 0: Euler-Maruyama, x_{j+1} = x_j + A x_j h + eps F sqrt(h) xi_j.
    """
    grid = np.asarray(grid, dtype=float)
    x0 = np.asarray(x0, dtype=float).reshape(model.m)
    n_steps = len(grid) - 1
    out = np.empty((n_steps + 1, model.m))
    out[0] = x0
    if eps == 0.0:
        steps = transition_steps(model, grid)
        x = x0
        for k in range(n_steps):
            x = steps[k] @ x
            out[k + 1] = x
        return out
    if rng is None:
        raise ValueError("eps > 0 requires an RNG for the system noise")
    h = grid[1:] - grid[:-1]
    a = model.A_at(grid[:-1])
    f = model.F_at(grid[:-1])
    xi = rng.standard_normal((n_steps, model.m))
    x = x0
    for k in range(n_steps):
        x = x + h[k] * (a[k] @ x) + (eps * np.sqrt(h[k])) * (f[k] @ xi[k])
        out[k + 1] = x
    return out


def simulate_observations(model: LtvModel, truth_fine: np.ndarray, fine: np.ndarray,
                          substeps: int, rng: np.random.Generator | None,
                          seed: int = 0, eps: float = 0.0) -> ObservationPath:
    """Aggregate fine-grid observation increments to the coarse grid.

    Per coarse step: dy_k = trapezoid of C_s x_s over the substeps plus
    sum_j R_j^{1/2} sqrt(h) xi_j. Passing rng=None is the deterministic-noise
    test hook (xi = 0 identically).
    """
    fine = np.asarray(fine, dtype=float)
    n_fine = len(fine) - 1
    if n_fine % substeps:
        raise ValueError("fine grid length is not a multiple of substeps")
    n_coarse = n_fine // substeps
    c = model.C_at(fine)
    cx = np.einsum("tij,tj->ti", c, truth_fine)
    h = (fine[1:] - fine[:-1])[:, None]
    drift = 0.5 * h * (cx[:-1] + cx[1:])
    if rng is not None:
        rhalf = _psd_sqrt_path(model.R_at(fine[:-1]))
        xi = rng.standard_normal((n_fine, model.n))
        noise = np.sqrt(h) * np.einsum("tij,tj->ti", rhalf, xi)
    else:
        noise = np.zeros_like(drift)
    inc = (drift + noise).reshape(n_coarse, substeps, model.n).sum(axis=1)
    coarse = fine[::substeps]
    return ObservationPath(grid=coarse, increments=inc, truth=truth_fine[::substeps],
                           substeps=substeps, seed=seed, eps=eps)


def generate_observation_path(cfg: ExperimentConfig, seed: int | None = None,
                              eps: float = 0.0, x0: np.ndarray | None = None,
                              noise_off: bool = False) -> ObservationPath:
    """Full pipeline: draw x0, integrate the truth, emit observation increments.

    `seed` defaults to cfg.seed; `noise_off` zeroes the observation noise
    (test hook) while keeping everything else identical.
    """
    seed = cfg.seed if seed is None else seed
    grid = cfg.grid()
    sub = cfg.substeps
    fg = fine_grid(grid, sub)
    if x0 is None:
        x0 = draw_initial_state(cfg, RngStream(seed, "x0").generator())
    vrng = RngStream(seed, "V").generator() if eps > 0 else None
    truth_fine = simulate_truth(cfg.model, x0, fg, eps=eps, rng=vrng)
    wrng = None if noise_off else RngStream(seed, "W").generator()
    return simulate_observations(cfg.model, truth_fine, fg, sub, wrng, seed=seed, eps=eps)


__all__ = [
    "ObservationPath",
    "RngStream",
    "draw_initial_state",
    "fine_grid",
    "generate_observation_path",
    "make_grid",
    "simulate_observations",
    "simulate_truth",
]

"""Fixed-step classical 4th-order integration kernels for the matrix ODEs.

All deterministic matrix flows in this package (state transition, Riccati,
closed-loop propagation) go through the two kernels here so that quantities
that must agree in the discrete algebra (filter one-step matrices, propagator
products, Riccati stage values) are built from bitwise-identical arithmetic.
"""

from __future__ import annotations

import numpy as np

from .model import LtvModel


def make_grid(horizon: float, dt: float) -> np.ndarray:
    """Uniform grid 0, dt, ..., K*dt with K = round(horizon/dt)."""
    n_steps = int(round(horizon / dt))
    if n_steps < 1:
        raise ValueError(f"horizon {horizon} shorter than one step dt={dt}")
    return np.arange(n_steps + 1) * dt


def _stage_times(grid):
    lo = grid[:-1]
    hi = grid[1:]
    return lo, 0.5 * (lo + hi), hi


def coefficient_stages(model: LtvModel, grid):
    """Coefficient matrices at step starts, midpoints and ends, batched.

    Returns a dict with keys 'A', 'G' (= C^T R^-1 C), 'C', 'Rinv', 'FFt',
    each a tuple of (lo, mid, hi) stacked arrays of shape (K, ., .).
    """
    lo, mid, hi = _stage_times(grid)
    out = {}
    a_all = [model.A_at(t) for t in (lo, mid, hi)]
    c_all = [model.C_at(t) for t in (lo, mid, hi)]
    r_all = [model.R_at(t) for t in (lo, mid, hi)]
    f_all = [model.F_at(t) for t in (lo, mid, hi)]
    rinv = [np.linalg.inv(r) for r in r_all]
    out["A"] = tuple(a_all)
    out["C"] = tuple(c_all)
    out["Rinv"] = tuple(rinv)
    out["G"] = tuple(np.swapaxes(c, 1, 2) @ ri @ c for c, ri in zip(c_all, rinv))
    out["FFt"] = tuple(f @ np.swapaxes(f, 1, 2) for f in f_all)
    return out


def transition_steps(model: LtvModel, grid) -> np.ndarray:
    """Batched RK4 one-step transition matrices for dz = A(t) z dt.

    The product step[k-1] @ ... @ step[0] is the fundamental matrix at grid[k].
    """
    lo, mid, hi = _stage_times(grid)
    h = (grid[1:] - grid[:-1])[:, None, None]
    a_lo, a_mid, a_hi = model.A_at(lo), model.A_at(mid), model.A_at(hi)
    eye = np.eye(model.m)
    k1 = a_lo
    k2 = a_mid @ (eye + (h / 2.0) * k1)
    k3 = a_mid @ (eye + (h / 2.0) * k2)
    k4 = a_hi @ (eye + h * k3)
    return eye + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def accumulate_transitions(steps: np.ndarray, start: np.ndarray | None = None) -> np.ndarray:
    """Running products: out[0] = start (identity by default), out[k+1] = steps[k] @ out[k]."""
    n, m, _ = steps.shape
    out = np.empty((n + 1, m, m))
    out[0] = np.eye(m) if start is None else start
    if m == 1:
        out[1:, 0, 0] = np.cumprod(steps[:, 0, 0]) * out[0, 0, 0]
        return out
    cur = out[0]
    for k in range(n):
        cur = steps[k] @ cur
        out[k + 1] = cur
    return out


def riccati_sweep(model: LtvModel, grid, P0, eps: float = 0.0,
                  supplied_path: np.ndarray | None = None,
                  blowup: float = 1e12):
    """Joint sweep of the Riccati flow and its closed-loop one-step matrices.

    Integrates dP = A P + P A^T - P C^T R^-1 C P + eps^2 F F^T with classical
    RK4 and per-step symmetrization, and simultaneously builds the RK4 one-step
    matrices M_k of the closed-loop flow dz = (A - P C^T R^-1 C) z using the
    same Riccati stage values, so that products of M_k are consistent with the
    returned covariance path.

    When supplied_path is given, each step restarts from supplied_path[k]
    instead of the internally propagated value (stage arithmetic is then
    bitwise identical to the sweep that produced the path).

    Returns (P_path (K+1,m,m), M_steps (K,m,m)).
    """
    n_steps = len(grid) - 1
    m = model.m
    stages = coefficient_stages(model, grid)
    a_lo, a_mid, a_hi = stages["A"]
    g_lo, g_mid, g_hi = stages["G"]
    if eps != 0.0:
        f_lo, f_mid, f_hi = stages["FFt"]
        e2 = eps * eps
        q_lo, q_mid, q_hi = e2 * f_lo, e2 * f_mid, e2 * f_hi
    else:
        z = np.zeros((n_steps, m, m))
        q_lo = q_mid = q_hi = z
    eye = np.eye(m)
    h = grid[1:] - grid[:-1]

    path = np.empty((n_steps + 1, m, m))
    msteps = np.empty((n_steps, m, m))
    P = 0.5 * (np.asarray(P0, dtype=float) + np.asarray(P0, dtype=float).T)
    path[0] = P

    if m == 1:
        _riccati_sweep_scalar(grid, h, float(P[0, 0]),
                              a_lo[:, 0, 0], a_mid[:, 0, 0], a_hi[:, 0, 0],
                              g_lo[:, 0, 0], g_mid[:, 0, 0], g_hi[:, 0, 0],
                              q_lo[:, 0, 0], q_mid[:, 0, 0], q_hi[:, 0, 0],
                              supplied_path, blowup, path, msteps)
        return path, msteps

    for k in range(n_steps):
        if supplied_path is not None:
            P = supplied_path[k]
        hk = h[k]
        A1, A2, A3 = a_lo[k], a_mid[k], a_hi[k]
        G1, G2, G3 = g_lo[k], g_mid[k], g_hi[k]
        Q1, Q2, Q3 = q_lo[k], q_mid[k], q_hi[k]

        pg = P @ G1
        ap = A1 @ P
        k1p = ap + ap.T - pg @ P + Q1
        k1m = A1 - pg
        p2 = P + (0.5 * hk) * k1p
        pg = p2 @ G2
        ap = A2 @ p2
        k2p = ap + ap.T - pg @ p2 + Q2
        k2m = (A2 - pg) @ (eye + (0.5 * hk) * k1m)
        p3 = P + (0.5 * hk) * k2p
        pg = p3 @ G2
        ap = A2 @ p3
        k3p = ap + ap.T - pg @ p3 + Q2
        k3m = (A2 - pg) @ (eye + (0.5 * hk) * k2m)
        p4 = P + hk * k3p
        pg = p4 @ G3
        ap = A3 @ p4
        k4p = ap + ap.T - pg @ p4 + Q3
        k4m = (A3 - pg) @ (eye + hk * k3m)

        P = P + (hk / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        P = 0.5 * (P + P.T)
        if np.abs(P).max() > blowup:
            raise FloatingPointError(
                f"Riccati blow-up: ||P|| > {blowup:g} at t={grid[k + 1]:.6g}")
        path[k + 1] = P
        msteps[k] = eye + (hk / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)

    return path, msteps


def _riccati_sweep_scalar(grid, h, p0, a1, a2, a3, g1, g2, g3, q1, q2, q3,
                          supplied_path, blowup, path, msteps):
    """Scalar (m = n = 1) sweep in plain float arithmetic; same stage formulas."""
    n_steps = len(h)
    a1 = a1.tolist(); a2 = a2.tolist(); a3 = a3.tolist()
    g1 = g1.tolist(); g2 = g2.tolist(); g3 = g3.tolist()
    q1 = q1.tolist(); q2 = q2.tolist(); q3 = q3.tolist()
    hs = h.tolist()
    sup = None if supplied_path is None else supplied_path[:, 0, 0].tolist()
    pout = path[:, 0, 0]
    mout = msteps[:, 0, 0]
    p = p0
    for k in range(n_steps):
        if sup is not None:
            p = sup[k]
        hk = hs[k]
        A1, A2, A3 = a1[k], a2[k], a3[k]
        G1, G2, G3 = g1[k], g2[k], g3[k]
        k1p = 2.0 * A1 * p - G1 * p * p + q1[k]
        k1m = A1 - p * G1
        p2 = p + 0.5 * hk * k1p
        k2p = 2.0 * A2 * p2 - G2 * p2 * p2 + q2[k]
        k2m = (A2 - p2 * G2) * (1.0 + 0.5 * hk * k1m)
        p3 = p + 0.5 * hk * k2p
        k3p = 2.0 * A2 * p3 - G2 * p3 * p3 + q2[k]
        k3m = (A2 - p3 * G2) * (1.0 + 0.5 * hk * k2m)
        p4 = p + hk * k3p
        k4p = 2.0 * A3 * p4 - G3 * p4 * p4 + q3[k]
        k4m = (A3 - p4 * G3) * (1.0 + hk * k3m)
        p = p + (hk / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        if abs(p) > blowup:
            raise FloatingPointError(
                f"Riccati blow-up: ||P|| > {blowup:g} at t={grid[k + 1]:.6g}")
        pout[k + 1] = p
        mout[k] = 1.0 + (hk / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)


def gain_steps(model: LtvModel, grid, msteps: np.ndarray) -> np.ndarray:
    """Per-step observation gain matrices D_k of the filter recursion.

    D_k := (Phi_step_k - M_k) pinv(C_k dt), a consistent realization of
    P_k C_k^T R_k^-1 chosen so that Phi_step_k - M_k = D_k (C_k dt) holds
    exactly whenever C_k has full row rank (always for square invertible C).
    That identity is what makes the mismatched-pair error decomposition exact
    in the discrete algebra.
    """
    phisteps = transition_steps(model, grid)
    c_lo = model.C_at(grid[:-1])
    h = grid[1:] - grid[:-1]
    diff = phisteps - msteps
    n_steps, m, _ = diff.shape
    n = model.n
    out = np.empty((n_steps, m, n))
    const_c = np.ptp(c_lo, axis=0).max() == 0.0 and np.ptp(h) == 0.0
    if const_c:
        pinv = np.linalg.pinv(c_lo[0] * h[0])
        out = diff @ pinv
    else:
        for k in range(n_steps):
            out[k] = diff[k] @ np.linalg.pinv(c_lo[k] * h[k])
    return out

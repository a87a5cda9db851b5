"""Closed-loop trajectory generation (Picard fixed point and direct ODE),
the fundamental cost identity on both horizons, feedback synthesis, and the
discrete dynamic-programming oracle.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import constants
from .are import AreSolution, are_integral_residual, truncation_horizon
from .dre import DreSolution, ire_residual
from .models import LqModel
from .numkernel import NumericalError, WeightedNorm, fractional_power, trapezoid
from .semiflow import ControlPath, Trajectory, probe_vectors


def _gain_at(source, model: LqModel, t: float) -> np.ndarray:
    """K(t) = B^T Q(t) from either a DRE path or a constant ARE solution."""
    if isinstance(source, DreSolution):
        return source.K_at(t)
    if isinstance(source, AreSolution):
        return source.K
    Q = np.asarray(source, dtype=float)
    return model.B.T @ Q


@dataclass(frozen=True)
class FixedPointTrace:
    iterates: list
    contraction_factors: list
    rate: float
    converged: bool

    @property
    def trajectory(self) -> Trajectory:
        return self.iterates[-1]


def closed_loop_fixed_point(model: LqModel, Qsource, x: np.ndarray, r: float,
                            tol: float = 1e-10, max_iter: int = 60,
                            grid: np.ndarray | None = None) -> FixedPointTrace:
    """Picard iteration y <- E - L B^T Q y for the closed-loop integral
    equation, with differences measured in the weighted sup norm
    sup_t e^{-rt} |y(t)|_{D(A^eps)}.
    """
    if r < 0:
        raise NumericalError("rate r must be >= 0")
    if grid is None:
        T = model.horizon if model.finite_horizon else truncation_horizon(model)
        grid = np.linspace(0.0, T, 1001)
    x = np.asarray(x, dtype=float)
    prop = model.propagator()
    E = prop.apply_batch(grid, x)                          # free flow e^{At}x
    eps = model.assumption.epsilon
    Aeps = fractional_power(model.A, eps)
    weights = np.exp(-r * grid)
    K = np.stack([_gain_at(Qsource, model, t) for t in grid])

    def xnorm(path):
        return float(np.max(weights * np.linalg.norm(path @ Aeps.T, axis=1)))

    def picard(y):
        # z(t) = int_0^t e^{A(t-s)} B K(s) y(s) ds, one forward sweep
        w = np.einsum("kmn,kn->km", K, y) @ model.B.T
        z = np.zeros_like(y)
        for i in range(len(grid) - 1):
            dt = grid[i + 1] - grid[i]
            Eh = prop.matrix(dt)
            z[i + 1] = Eh @ z[i] + 0.5 * dt * (Eh @ w[i] + w[i + 1])
        return E - z

    y = E.copy()
    iterates = [Trajectory(grid, y)]
    factors: list[float] = []
    prev_diff = None
    converged = False
    floor = 1e3 * np.finfo(float).eps * max(xnorm(E), 1.0)
    for _ in range(max_iter):
        y_next = picard(y)
        diff = xnorm(y_next - y)
        if prev_diff is not None and prev_diff > floor:
            factors.append(diff / prev_diff)
        prev_diff = diff
        y = y_next
        iterates.append(Trajectory(grid, y))
        if diff <= tol * max(xnorm(y), 1.0):
            converged = True
            break
    return FixedPointTrace(iterates, factors, r, converged)


def closed_loop_ode(model: LqModel, Qsource, x: np.ndarray,
                    grid: np.ndarray) -> Trajectory:
    """RK4 integration of y' = (A - B K(t)) y with K read from the gain source."""
    grid = np.asarray(grid, dtype=float)
    if isinstance(Qsource, DreSolution) and grid[-1] > Qsource.T + 1e-9:
        raise NumericalError("gain grid does not cover the requested span")
    y = np.zeros((len(grid), model.n))
    y[0] = np.asarray(x, dtype=float)

    def rhs(t, v):
        return model.A @ v - model.B @ (_gain_at(Qsource, model, t) @ v)

    for i in range(len(grid) - 1):
        h = grid[i + 1] - grid[i]
        tm = grid[i] + 0.5 * h
        k1 = rhs(grid[i], y[i])
        k2 = rhs(tm, y[i] + 0.5 * h * k1)
        k3 = rhs(tm, y[i] + 0.5 * h * k2)
        k4 = rhs(grid[i + 1], y[i] + h * k3)
        y[i + 1] = y[i] + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return Trajectory(grid, y)


def simulate(model: LqModel, u: ControlPath, x: np.ndarray) -> Trajectory:
    """Mild solution y(t) = e^{At} x + (L_0 u)(t) on u's grid, with the
    running cost J = int (|R y|^2 + |u|^2); u is held constant per interval
    (exact state update through the interval propagator)."""
    grid = u.grid
    x = np.asarray(x, dtype=float)
    prop = model.propagator()
    n = model.n
    y = np.zeros((len(grid), n))
    y[0] = x
    A_inv = np.linalg.inv(model.A)
    for i in range(len(grid) - 1):
        dt = grid[i + 1] - grid[i]
        E = prop.matrix(dt)
        G = A_inv @ (E - np.eye(n)) @ model.B
        y[i + 1] = E @ y[i] + G @ u.values[i]
    cost = running_cost(model, Trajectory(grid, y), u)
    return Trajectory(grid, y, controls=u, cost=cost)


def running_cost(model: LqModel, traj: Trajectory, u: ControlPath) -> float:
    """int |R y|^2 + |u|^2: trapezoid on the state term per interval, exact
    piecewise-constant accumulation for the control term."""
    grid = traj.grid
    Ry = traj.states @ model.R.T
    state_rate = np.einsum("ki,ki->k", Ry, Ry)
    dt = np.diff(grid)
    state_term = float(np.sum(0.5 * dt * (state_rate[:-1] + state_rate[1:])))
    ctrl_term = float(np.sum(dt * np.einsum("km,km->k", u.values[:-1], u.values[:-1])))
    return state_term + ctrl_term


def _precheck(Qsource, model: LqModel, rng: np.random.Generator) -> None:
    """The cost identity only holds for integral-Riccati solutions; verify a
    couple of random probe tuples before trusting the candidate."""
    x = rng.standard_normal(model.n)
    y = rng.standard_normal(model.n)
    scale = 1.0 + np.linalg.norm(x) * np.linalg.norm(y)
    if isinstance(Qsource, DreSolution):
        T = Qsource.T
        res = ire_residual(Qsource, model, 0.25 * T, 0.75 * T, x, y)
        bound = 1e-4 * scale * max(np.max([np.linalg.norm(P, 2) for P in Qsource.P]), 1.0)
    elif isinstance(Qsource, AreSolution):
        res = are_integral_residual(Qsource, model, 0.0, 2.0, x, y, grid_steps=2000)
        bound = 1e-4 * scale * max(np.linalg.norm(Qsource.P, 2), 1.0)
    else:
        raise NumericalError("precheck requires a DRE or ARE solution object")
    if res > bound:
        raise NumericalError(f"candidate failed its integral-equation precheck ({res:.3g})")


def fundamental_identity_residual(Qsource, model: LqModel, u: ControlPath,
                                  x: np.ndarray, s: float, t: float,
                                  precheck: bool = True) -> float:
    """|both sides| of the cost identity: the change of the quadratic form
    (Q y, y) along an arbitrary controlled trajectory equals the negative
    running cost plus the completed square int |u + B^T Q y|^2."""
    if precheck:
        _precheck(Qsource, model, np.random.default_rng(12345))
    grid = u.grid
    if abs(grid[0] - s) > 1e-12 or abs(grid[-1] - t) > 1e-9:
        raise NumericalError("control path must be sampled on [s, t]")
    traj = simulate(model, u, np.asarray(x, dtype=float))
    y = traj.states
    Qs = _q_matrix(Qsource, model, s)
    Qt = _q_matrix(Qsource, model, t)
    lhs = float(y[-1] @ Qt @ y[-1]) - float(y[0] @ Qs @ y[0])

    Ry = y @ model.R.T
    state_rate = np.einsum("ki,ki->k", Ry, Ry)
    Ky = np.stack([_gain_at(Qsource, model, tk) for tk in grid]) if isinstance(Qsource, DreSolution) \
        else np.broadcast_to(_gain_at(Qsource, model, 0.0), (len(grid), model.m, model.n))
    gain_path = np.einsum("kmn,kn->km", Ky, y)
    dt = np.diff(grid)
    uv = u.values
    # per-interval: u constant, y and B^T Q y vary; trapezoid on the smooth parts
    run = float(np.sum(0.5 * dt * (state_rate[:-1] + state_rate[1:])))
    run += float(np.sum(dt * np.einsum("km,km->k", uv[:-1], uv[:-1])))
    sq_left = np.einsum("km,km->k", uv[:-1] + gain_path[:-1], uv[:-1] + gain_path[:-1])
    sq_right = np.einsum("km,km->k", uv[:-1] + gain_path[1:], uv[:-1] + gain_path[1:])
    completed = float(np.sum(0.5 * dt * (sq_left + sq_right)))
    rhs = -run + completed
    return abs(lhs - rhs)


def _q_matrix(Qsource, model, t):
    if isinstance(Qsource, DreSolution):
        return Qsource.P_at(t)
    if isinstance(Qsource, AreSolution):
        return Qsource.P
    return np.asarray(Qsource, dtype=float)


def feedback_synthesis(model: LqModel, sol, x: np.ndarray,
                       grid_steps: int = 4000) -> tuple[ControlPath, Trajectory, float]:
    """Optimal feedback run: y from the gain closed loop, u = -K(t) y, and
    the accumulated cost; J must reproduce (P(0)x, x) up to quadrature error."""
    x = np.asarray(x, dtype=float)
    if isinstance(sol, DreSolution):
        T = sol.T
    else:
        T = truncation_horizon(model)
    grid = np.linspace(0.0, T, grid_steps + 1)
    traj = closed_loop_ode(model, sol, x, grid)
    K = np.stack([_gain_at(sol, model, t) for t in grid])
    u_vals = -np.einsum("kmn,kn->km", K, traj.states)
    u_hat = ControlPath(grid, u_vals)
    Ry = traj.states @ model.R.T
    rate = np.einsum("ki,ki->k", Ry, Ry) + np.einsum("km,km->k", u_vals, u_vals)
    from scipy.integrate import simpson
    J_hat = float(simpson(rate, x=grid))
    y_hat = Trajectory(grid, traj.states, controls=u_hat, cost=J_hat)
    return u_hat, y_hat, J_hat


def discrete_dp_oracle(model: LqModel, T: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact dynamic programming for the sampled system y+ = F y + G u with
    F = e^{A dt}, G = A^-1 (F - I) B and stage cost dt (|R y|^2 + |u|^2).

    Returns (grid, P_disc) with P_disc[k] the value matrix at t_k; the value
    of an initial state x is x^T P_disc[0] x.
    """
    if dt <= 0:
        raise NumericalError("dt must be positive")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise NumericalError("dt must divide T")
    F = model.propagator().matrix(dt)
    G = np.linalg.solve(model.A, (F - np.eye(model.n)) @ model.B)
    Qd = dt * (model.R.T @ model.R)
    Rd = dt * np.eye(model.m)
    P = np.zeros((model.n, model.n))
    path = np.zeros((steps + 1, model.n, model.n))
    for k in range(steps - 1, -1, -1):
        if model.m:
            S = Rd + G.T @ P @ G
            gain = np.linalg.solve(S, G.T @ P @ F)
            P = Qd + F.T @ P @ F - (F.T @ P @ G) @ gain
        else:
            P = Qd + F.T @ P @ F
        P = 0.5 * (P + P.T)
        path[k] = P
    grid = np.linspace(0.0, T, steps + 1)
    return grid, path


def save_trajectory_csv(traj: Trajectory, model: LqModel, path: str) -> None:
    """Columns: t, state components, control components, cumulative cost."""
    grid = traj.grid
    states = traj.states
    u = traj.controls.values if traj.controls is not None else np.zeros((len(grid), 0))
    Ry = states @ model.R.T
    rate = np.einsum("ki,ki->k", Ry, Ry) + np.einsum("km,km->k", u, u)
    running = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(grid) * (rate[:-1] + rate[1:]))])
    header = (["t"] + [f"y{i}" for i in range(model.n)]
              + [f"u{j}" for j in range(u.shape[1])] + ["J_running"])
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(f"# model_id={model.model_id()} kind=trajectory\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(len(grid)):
                writer.writerow([format(grid[k], ".17g")]
                                + [format(v, ".17g") for v in states[k]]
                                + [format(v, ".17g") for v in u[k]]
                                + [format(running[k], ".17g")])
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)

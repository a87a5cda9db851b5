"""Input-to-state map, adjoint kernel representations, and empirical
measurement of the regularity assumptions (singular decay of F, admissibility,
weighted L^q kernel norms, duality residuals).

Operator norms over unit spheres are estimated by seeded Gaussian probing
plus the canonical basis; seeds are expanded into per-probe substreams with
numpy's SeedSequence so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constants
from .models import LqModel, decompose_adjoint_kernel
from .numkernel import NumericalError, fractional_power, graded_grid, quadrature, trapezoid


@dataclass(frozen=True)
class ControlPath:
    """Control samples u(t_i) on a strictly increasing grid; treated as
    piecewise constant on [t_i, t_{i+1}) wherever exact norms are needed."""

    grid: np.ndarray
    values: np.ndarray   # (len(grid), m)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
            raise NumericalError("control grid must be strictly increasing")
        if values.shape[0] != grid.shape[0] or not np.all(np.isfinite(values)):
            raise NumericalError("control values malformed")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def lp_norm(self, p: float) -> float:
        """Exact L^p norm for the piecewise-constant interpretation."""
        dt = np.diff(self.grid)
        mags = np.linalg.norm(self.values[:-1], axis=1)
        return float(np.sum(dt * mags ** p) ** (1.0 / p))


@dataclass(frozen=True)
class Trajectory:
    grid: np.ndarray
    states: np.ndarray               # (len(grid), n)
    controls: ControlPath | None = None
    cost: float | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.states)):
            raise NumericalError("trajectory states must be finite")
        if self.cost is not None and self.cost < 0:
            raise NumericalError("cost must be nonnegative")


def probe_vectors(n: int, probes: int, seed: int) -> np.ndarray:
    """Unit probe directions: canonical basis plus seeded normalized Gaussians."""
    rng_streams = np.random.SeedSequence(seed).spawn(probes)
    xs = [np.eye(n)[i] for i in range(n)]
    for ss in rng_streams:
        v = np.random.default_rng(ss).standard_normal(n)
        xs.append(v / np.linalg.norm(v))
    return np.array(xs)


def input_to_state(model: LqModel, s: float, u: ControlPath, t: float) -> np.ndarray:
    """(L_s u)(t) = int_s^t e^{A(t-r)} B u(r) dr, by trapezoid on u's grid."""
    if not (s <= t):
        raise NumericalError("need s <= t")
    grid = u.grid
    if t < grid[0] - 1e-12 or t > grid[-1] + 1e-12:
        raise NumericalError("t outside the control grid span")
    if t - s <= 0:
        return np.zeros(model.n)
    mask = (grid >= s - 1e-15) & (grid <= t + 1e-15)
    sub_t = grid[mask]
    sub_u = u.values[mask]
    if sub_t.size < 2:
        return np.zeros(model.n)
    prop = model.propagator()
    Bu = sub_u @ model.B.T                       # (k, n)
    kernels = prop.apply_batch(t - sub_t[::-1], np.eye(model.n))[::-1]
    integrand = np.einsum("kij,kj->ki", kernels, Bu)
    return trapezoid(integrand, sub_t)


def input_to_state_path(model: LqModel, u: ControlPath) -> np.ndarray:
    """(L_0 u)(t_i) on every node of u's grid, by one forward sweep.

    Uses the recursion z(t_{i+1}) = e^{A dt} z(t_i) + step quadrature, which
    matches the trapezoid evaluation of the convolution on the same grid.
    """
    grid = u.grid
    prop = model.propagator()
    Bu = u.values @ model.B.T
    z = np.zeros((len(grid), model.n))
    for i in range(len(grid) - 1):
        dt = grid[i + 1] - grid[i]
        E = prop.matrix(dt)
        z[i + 1] = E @ z[i] + 0.5 * dt * (E @ Bu[i] + Bu[i + 1])
    return z


def admissibility_constant(model: LqModel, T: float, probes: int = constants.DEFAULT_PROBES,
                           seed: int = 0, nodes: int = constants.GRADED_NODES_DEFAULT) -> float:
    """max over sampled unit x of int_0^T ||B^T e^{A^T t} x||^2 dt (graded near 0)."""
    if T <= 0:
        raise NumericalError("T must be positive")
    if model.m == 0:
        return 0.0
    ts = graded_grid(constants.GRADED_T_MIN, T, nodes)
    prop = model.adjoint_propagator()
    kernels = np.stack([model.B.T @ prop.matrix(t) for t in ts])   # (nt, m, n)
    xs = probe_vectors(model.n, probes, seed)
    # sharpen the sample with the top eigenvector of the quadrature Gram
    # matrix int K(t)^T K(t) dt; random probes alone miss it in high dimension
    gram = trapezoid(np.einsum("tmi,tmj->tij", kernels, kernels), ts)
    _, vecs = np.linalg.eigh(0.5 * (gram + gram.T))
    xs = np.vstack([xs, vecs[:, -1]])
    best = 0.0
    for x in xs:
        g = np.linalg.norm(kernels @ x, axis=1) ** 2
        best = max(best, float(quadrature(g, ts, rule="graded")))
    return best


def estimate_singular_decay(model: LqModel, t_min: float, t_max: float,
                            nodes: int = 32) -> tuple[float, float, float]:
    """Least-squares fit of log ||F(t)|| = log N - gamma log t on log-spaced nodes.

    Returns (gamma_hat, N_hat, fit_residual). Raises when the model has no
    singular component (F identically zero).
    """
    if not 0 < t_min < t_max:
        raise NumericalError("need 0 < t_min < t_max")
    if nodes < 8:
        raise NumericalError("need at least 8 nodes")
    ts = np.geomspace(t_min, t_max, nodes)
    norms = np.array([np.linalg.norm(decompose_adjoint_kernel(model, t)[0], 2) for t in ts])
    if np.max(norms) == 0.0:
        raise NumericalError("no singular component (F is identically zero)")
    design = np.vstack([-np.log(ts), np.ones_like(ts)]).T
    coef, *_ = np.linalg.lstsq(design, np.log(norms), rcond=None)
    gamma_hat, logN = coef
    resid = float(np.sqrt(np.mean((design @ coef - np.log(norms)) ** 2)))
    return float(gamma_hat), float(np.exp(logN)), resid


def improved_regularity_probe(model: LqModel, s: float, T: float,
                              samples: int = 16, seed: int = 0,
                              grid_steps: int = 400) -> float:
    """Empirical norm of L_s as a map L^{q'}(s,T;U) -> C([s,T]; D(A^eps)).

    Samples piecewise-constant controls normalized in L^{q'}, applies L_s on
    a uniform grid, and reports the worst sup_t ||(-A)^eps (L_s u)(t)||.
    """
    if samples < 1:
        raise NumericalError("samples must be >= 1")
    if not model.finite_horizon and math.isinf(T):
        raise NumericalError("pass a finite probe horizon")
    eps = model.assumption.epsilon
    qp = model.assumption.q_prime
    Aeps = fractional_power(model.A, eps)
    grid = np.linspace(s, T, grid_steps + 1)
    streams = np.random.SeedSequence(seed).spawn(samples)
    worst = 0.0
    for ss in streams:
        rng = np.random.default_rng(ss)
        vals = rng.standard_normal((grid_steps + 1, model.m))
        u = ControlPath(grid, vals)
        scale = u.lp_norm(qp)
        if scale == 0:
            continue
        u = ControlPath(grid, vals / scale)
        path = input_to_state_path(model.with_horizon(T) if model.finite_horizon else model, u)
        worst = max(worst, float(np.max(np.linalg.norm(path @ Aeps.T, axis=1))))
    return worst


def weighted_kernel_Lq(model: LqModel, delta: float, q: float, eps: float,
                       horizon: float, probes: int = constants.DEFAULT_PROBES,
                       seed: int = 0, nodes: int = constants.GRADED_NODES_DEFAULT) -> float:
    """max over sampled unit x of the L^q(0,horizon) norm of
    e^{delta t} ||B^T e^{A^T t} ((-A)^T)^eps x||, via graded quadrature."""
    a = model.assumption
    if not model.finite_horizon and delta >= min(a.omega, a.eta):
        raise NumericalError("delta must be < min(omega, eta) for infinite horizon")
    if not 1 < q < 2:
        raise NumericalError("q must lie in (1, 2)")
    if model.m == 0:
        return 0.0
    Aeps_T = fractional_power(model.A.T, eps) if eps != 0 else np.eye(model.n)
    ts = graded_grid(constants.GRADED_T_MIN, horizon, nodes)
    prop = model.adjoint_propagator()
    kernels = np.stack([model.B.T @ prop.matrix(t) @ Aeps_T for t in ts])
    weights = np.exp(delta * ts)
    xs = probe_vectors(model.n, probes, seed)
    best = 0.0
    for x in xs:
        g = (weights * np.linalg.norm(kernels @ x, axis=1)) ** q
        best = max(best, float(quadrature(g, ts, rule="graded") ** (1.0 / q)))
    return best


def adjoint_duality_residual(model: LqModel, delta: float, h: ControlPath,
                             g: np.ndarray, z: np.ndarray, w: np.ndarray,
                             horizon: float) -> tuple[float, float]:
    """Duality residuals for the two adjoint kernel representations.

    S maps z to the function t -> e^{delta t} B^T e^{A^T t} ((-A)^T)^eps z and
    S* h = int e^{delta t} (-A)^eps e^{At} B h(t) dt; T maps w to
    t -> e^{delta t} (-A)^{-eps} e^{At} B w with T* g the mirrored integral.
    Both pairings are evaluated with one quadrature rule on one grid, so the
    residuals measure discretization consistency only.
    """
    a = model.assumption
    if not 0 < delta < min(a.omega, a.eta):
        raise NumericalError("delta must lie in (0, min(omega, eta))")
    grid = h.grid
    if abs(grid[-1] - horizon) > 1e-9 or abs(grid[0]) > 1e-12:
        raise NumericalError("h must be sampled on [0, horizon]")
    g = np.asarray(g, dtype=float)
    if g.shape != (len(grid), model.n):
        raise NumericalError("g must be an n-vector path on h's grid")
    eps = a.epsilon
    Aeps = fractional_power(model.A, eps)
    Aeps_negT = fractional_power(model.A.T, -eps)
    prop = model.propagator()
    prop_T = model.adjoint_propagator()
    weights = np.exp(delta * grid)

    E = np.stack([prop.matrix(t) for t in grid])
    ET = np.stack([prop_T.matrix(t) for t in grid])

    # S branch
    s_integrand = np.einsum("t,ij,tjk,km,tm->ti", weights, Aeps, E, model.B, h.values)
    S_star_h = trapezoid(s_integrand, grid)
    Sz = np.einsum("t,mj,tjk,ki,i->tm", weights, model.B.T, ET, Aeps.T, z)
    pairing_S = trapezoid(np.einsum("tm,tm->t", h.values, Sz), grid)
    res_S = abs(float(S_star_h @ z) - float(pairing_S))

    # T branch
    t_integrand = np.einsum("t,mj,tjk,ki,ti->tm", weights, model.B.T, ET, Aeps_negT, g)
    T_star_g = trapezoid(t_integrand, grid)
    Tw = np.einsum("t,ij,tjk,km->tim", weights, np.linalg.inv(Aeps), E, model.B) @ w
    pairing_T = trapezoid(np.einsum("ti,ti->t", g, Tw), grid)
    res_T = abs(float(T_star_g @ w) - float(pairing_T))
    return res_S, res_T


def assumption_report(model: LqModel, seed: int = 0, probes: int = constants.DEFAULT_PROBES,
                      fit_window: tuple[float, float] = (1e-4, 1e-2)) -> dict:
    """JSON-ready summary of the measured assumption constants."""
    report: dict = {"model_id": model.model_id(), "probes": probes, "seed": seed}
    horizon = model.horizon if model.finite_horizon else 20.0
    try:
        gamma_hat, N_hat, resid = estimate_singular_decay(model, *fit_window)
        report.update(gamma_hat=gamma_hat, N_hat=N_hat, fit_residuals=resid)
    except NumericalError:
        report.update(gamma_hat="no singular component", N_hat=None, fit_residuals=None)
    report["admissibility_C"] = admissibility_constant(model, horizon, probes=probes, seed=seed)
    a = model.assumption
    delta = 0.0 if model.finite_horizon else 0.5 * min(a.omega, a.eta)
    if model.m:
        report["weighted_Lq"] = weighted_kernel_Lq(model, delta, a.q, a.epsilon,
                                                   horizon, probes=probes, seed=seed)
    else:
        report["weighted_Lq"] = 0.0
    return report

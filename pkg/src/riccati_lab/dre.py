"""Finite-horizon differential Riccati equation: backward solvers, the two
integral Riccati forms, optimal-cost self-consistency, and the window
contraction probe behind the uniqueness argument.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import constants
from .models import LqModel
from .numkernel import NumericalError, fractional_power, quadrature, trapezoid


@dataclass(frozen=True)
class DreSolution:
    """Time-indexed P(t) on a uniform grid over [0, T], with K(t) = B^T P(t).

    P is stored ascending in t with P[-1] = P(T) = 0; queries between nodes
    interpolate linearly in t.
    """

    grid: np.ndarray          # (steps+1,)
    P: np.ndarray             # (steps+1, n, n)
    K: np.ndarray             # (steps+1, m, n)
    integrator: str = "rk4"

    def P_at(self, t: float) -> np.ndarray:
        return _interp_path(self.grid, self.P, t)

    def K_at(self, t: float) -> np.ndarray:
        return _interp_path(self.grid, self.K, t)

    @property
    def T(self) -> float:
        return float(self.grid[-1])


def _interp_path(grid, path, t):
    if t <= grid[0]:
        return path[0]
    if t >= grid[-1]:
        return path[-1]
    i = int(np.searchsorted(grid, t) - 1)
    w = (t - grid[i]) / (grid[i + 1] - grid[i])
    return (1 - w) * path[i] + w * path[i + 1]


def _riccati_rhs(model: LqModel, P: np.ndarray) -> np.ndarray:
    A, B, R = model.A, model.B, model.R
    return -(A.T @ P + P @ A - P @ B @ B.T @ P + R.T @ R)


def solve_dre(model: LqModel, steps: int, integrator: str = "rk4") -> DreSolution:
    """Integrate dP/dt = -(A^T P + P A - P B B^T P + R^T R) backward from
    P(T) = 0, symmetrizing after every step.
    """
    if not model.finite_horizon:
        raise NumericalError("solve_dre needs a finite horizon")
    if steps < 2:
        raise NumericalError("steps must be >= 2")
    if integrator not in ("rk4", "implicit-midpoint"):
        raise NumericalError(f"unknown integrator {integrator!r}")
    T = model.horizon
    grid = np.linspace(0.0, T, steps + 1)
    h = T / steps
    n = model.n
    P_path = np.zeros((steps + 1, n, n))
    P = np.zeros((n, n))
    f = lambda M: _riccati_rhs(model, M)
    for k in range(steps, 0, -1):
        if integrator == "rk4":
            k1 = f(P)
            k2 = f(P - 0.5 * h * k1)
            k3 = f(P - 0.5 * h * k2)
            k4 = f(P - h * k3)
            P = P - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            # implicit midpoint: the linear (stiff) part of the midpoint
            # equation is solved exactly as a Sylvester equation, with the
            # quadratic gain term lagged and iterated to convergence
            import scipy.linalg as sla
            A, B, R = model.A, model.B, model.R
            A1 = 0.5 * np.eye(n) - 0.5 * h * A.T
            B1 = 0.5 * np.eye(n) - 0.5 * h * A
            mid = P
            for _ in range(12):
                rhs_c = P + 0.5 * h * (R.T @ R - mid @ B @ B.T @ mid)
                mid_next = sla.solve_sylvester(A1, B1, rhs_c)
                if np.linalg.norm(mid_next - mid, 2) <= 1e-14 * max(np.linalg.norm(mid, 2), 1.0):
                    mid = mid_next
                    break
                mid = mid_next
            P = 2.0 * mid - P
        P = 0.5 * (P + P.T)
        if np.linalg.norm(P, 2) > constants.DRE_BLOWUP_NORM:
            raise NumericalError(f"DRE blow-up detected at t={grid[k - 1]:.6g}")
        P_path[k - 1] = P
    K_path = np.einsum("mj,tjn->tmn", model.B.T, P_path) if model.m else np.zeros((steps + 1, 0, n))
    return DreSolution(grid, P_path, K_path, integrator=integrator)


def _segment(sol_grid, s, t):
    """Grid nodes covering [s, t], with interpolated endpoints."""
    inner = sol_grid[(sol_grid > s + 1e-14) & (sol_grid < t - 1e-14)]
    return np.concatenate([[s], inner, [t]])


def ire_residual(sol: DreSolution, model: LqModel, s: float, t: float,
                 x: np.ndarray, y: np.ndarray) -> float:
    """Residual of the bilinear integral Riccati form between times s and t:
    the evolved quadratic term must balance (Q(s)x, y) against the observation
    and gain integrals along the free flow.
    """
    if s > t:
        raise NumericalError("need s <= t")
    if t == s:
        return 0.0
    seg = _segment(sol.grid, s, t)
    prop = model.propagator()
    ex = prop.apply_batch(seg - s, np.asarray(x, dtype=float))    # (k, n)
    ey = prop.apply_batch(seg - s, np.asarray(y, dtype=float))
    Q = np.stack([sol.P_at(r) for r in seg])
    obs = np.einsum("ki,ij,jl,kl->k", ex, model.R.T, model.R, ey)
    if model.m:
        gx = np.einsum("mn,kno,ko->km", model.B.T, Q, ex)
        gy = np.einsum("mn,kno,ko->km", model.B.T, Q, ey)
        gain = np.einsum("km,km->k", gx, gy)
    else:
        gain = np.zeros(len(seg))
    lhs = float(ex[-1] @ Q[-1] @ ey[-1])
    rhs = (float(x @ Q[0] @ y) - float(quadrature(obs, seg, rule="simpson"))
           + float(quadrature(gain, seg, rule="simpson")))
    return abs(lhs - rhs)


def ire_strong_residual(sol: DreSolution, model: LqModel, s: float, t: float) -> float:
    """Matrix-norm residual of the operator form of the integral Riccati
    equation (kernels sandwiched by e^{A^T(r-s)} . e^{A(r-s)})."""
    if s > t:
        raise NumericalError("need s <= t")
    if t == s:
        return 0.0
    seg = _segment(sol.grid, s, t)
    prop = model.propagator()
    E = np.stack([prop.matrix(r - s) for r in seg])
    Q = np.stack([sol.P_at(r) for r in seg])
    RtR = model.R.T @ model.R
    BBt = model.B @ model.B.T
    obs = np.einsum("kji,jl,klm->kim", E, RtR, E)
    gain = np.einsum("kji,kjl,lo,kop,kpm->kim", E, Q, BBt, Q, E)
    lhs = E[-1].T @ Q[-1] @ E[-1]
    rhs = Q[0] - quadrature(obs, seg, rule="simpson") + quadrature(gain, seg, rule="simpson")
    return float(np.linalg.norm(lhs - rhs, 2))


def propagate_closed_loop(sol: DreSolution, model: LqModel, t0: float,
                          x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Phi(tau, t0) x on the given grid, by RK4 on y' = (A - B B^T P(tau)) y."""
    y = np.zeros((len(grid), model.n))
    y[0] = x
    BBt = model.B @ model.B.T

    def rhs(tau, v):
        return model.A @ v - BBt @ (sol.P_at(tau) @ v)

    for i in range(len(grid) - 1):
        h = grid[i + 1] - grid[i]
        tm = grid[i] + 0.5 * h
        k1 = rhs(grid[i], y[i])
        k2 = rhs(tm, y[i] + 0.5 * h * k1)
        k3 = rhs(tm, y[i] + 0.5 * h * k2)
        k4 = rhs(grid[i + 1], y[i] + h * k3)
        y[i + 1] = y[i] + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def opric_selfconsistency(sol: DreSolution, model: LqModel, t: float,
                          probes: int = 8, seed: int = 0) -> float:
    """Max probe residual of P(t)x = int_t^T e^{A^T(tau-t)} R^T R Phi(tau,t)x dtau,
    with Phi propagated through the feedback gain; also folds in the evolution
    property residual Phi(t2, t1) Phi(t1, t0) = Phi(t2, t0)."""
    T = sol.T
    if t > T:
        raise NumericalError("t must lie in [0, T]")
    if t == T:
        return 0.0
    from .semiflow import probe_vectors
    xs = probe_vectors(model.n, probes, seed)
    seg = sol.grid[sol.grid >= t - 1e-14]
    if abs(seg[0] - t) > 1e-12:
        seg = np.concatenate([[t], seg])
    prop_T = model.adjoint_propagator()
    ET = np.stack([prop_T.matrix(tau - t) for tau in seg])
    RtR = model.R.T @ model.R
    worst = 0.0
    for x in xs:
        phi = propagate_closed_loop(sol, model, t, x, seg)
        integrand = np.einsum("kij,jl,kl->ki", ET, RtR, phi)
        lhs = sol.P_at(t) @ x
        worst = max(worst, float(np.linalg.norm(lhs - trapezoid(integrand, seg))))
    # evolution property through an intermediate time
    sigma = 0.5 * (t + T)
    seg1 = seg[seg <= sigma + 1e-12]
    seg2 = seg[seg >= sigma - 1e-12]
    for x in xs[: min(3, len(xs))]:
        y_mid = propagate_closed_loop(sol, model, t, x, seg1)[-1]
        y_two = propagate_closed_loop(sol, model, seg2[0], y_mid, seg2)[-1]
        y_one = propagate_closed_loop(sol, model, t, x, seg)[-1]
        worst = max(worst, float(np.linalg.norm(y_two - y_one)))
    return worst


def uniqueness_map_apply(Qpath: np.ndarray, P: DreSolution, P1: DreSolution,
                         model: LqModel, s: float) -> np.ndarray:
    """The linear map of the difference path in the uniqueness argument:
    -int_s^T e^{A^T(r-s)} [P1(r) B B^T Q(r) + Q(r) B B^T P(r)] e^{A(r-s)} dr.

    Qpath holds symmetric matrices on the grid of P; P1 is interpolated
    onto that grid.
    """
    if Qpath.shape != P.P.shape:
        raise NumericalError("Qpath must live on the grid of P")
    grid = P.grid
    mask = grid >= s - 1e-14
    seg = grid[mask]
    if seg.size < 2:
        return np.zeros((model.n, model.n))
    prop = model.propagator()
    E = np.stack([prop.matrix(r - s) for r in seg])
    BBt = model.B @ model.B.T
    P1seg = np.stack([P1.P_at(float(r)) for r in seg])
    middle = (np.einsum("kij,jl,klm->kim", P1seg, BBt, Qpath[mask])
              + np.einsum("kij,jl,klm->kim", Qpath[mask], BBt, P.P[mask]))
    integrand = np.einsum("kji,kjl,klm->kim", E, middle, E)
    return -trapezoid(integrand, seg)


def gain_norm_eps(Q: np.ndarray, model: LqModel, Aeps_inv: np.ndarray | None = None) -> float:
    """||B^T Q (-A)^{-eps}||_2, the finite-dimensional gain norm on D(A^eps)."""
    if model.m == 0:
        return 0.0
    if Aeps_inv is None:
        Aeps_inv = fractional_power(model.A, -model.assumption.epsilon)
    return float(np.linalg.norm(model.B.T @ Q @ Aeps_inv, 2))


def uniqueness_contraction_estimate(P: DreSolution, P1: DreSolution, model: LqModel,
                                    delta: float, probes: int = 8, seed: int = 0,
                                    power_iters: int = 4, window_nodes: int = 33) -> float:
    """Estimated norm of the uniqueness map restricted to symmetric paths
    supported on [T - delta, T], in the sup-over-time gain norm, by power
    iteration over seeded random symmetric path probes.

    The map is evaluated on an internal uniform window grid: with spacing h,
    e^{A(r_j - s_i)} is the (j - i)-th power of e^{Ah}, so the whole kernel
    table costs one propagator evaluation.
    """
    T = P.T
    if not 0 < delta <= T + 1e-12:
        raise NumericalError("need 0 < delta <= T")
    if model.m == 0:
        return 0.0
    k = window_nodes - 1
    seg = np.linspace(T - delta, T, window_nodes)
    h = seg[1] - seg[0]
    D = model.propagator().matrix(h)
    Epow = [np.eye(model.n)]
    for _ in range(k):
        Epow.append(D @ Epow[-1])
    BBt = model.B @ model.B.T
    Ppath = np.stack([P.P_at(s) for s in seg])
    P1path = np.stack([P1.P_at(s) for s in seg])
    Aeps_inv = fractional_power(model.A, -model.assumption.epsilon)

    def path_norm(Qpath):
        return max(gain_norm_eps(Q, model, Aeps_inv) for Q in Qpath)

    def apply_map(Qpath):
        middle = (np.einsum("kij,jl,klm->kim", P1path, BBt, Qpath)
                  + np.einsum("kij,jl,klm->kim", Qpath, BBt, Ppath))
        out = np.zeros_like(Qpath)
        for i in range(window_nodes - 1):
            terms = np.stack([Epow[j - i].T @ middle[j] @ Epow[j - i]
                              for j in range(i, window_nodes)])
            M = -trapezoid(terms, seg[i:])
            out[i] = 0.5 * (M + M.T)
        return out

    streams = np.random.SeedSequence(seed).spawn(probes)
    rho = 0.0
    for ss in streams:
        rng = np.random.default_rng(ss)
        W = rng.standard_normal((window_nodes, model.n, model.n))
        Qpath = 0.5 * (W + np.swapaxes(W, 1, 2))
        Qpath[-1] = 0.0   # paths in the class vanish at T
        nrm = path_norm(Qpath)
        if nrm == 0:
            continue
        for _ in range(power_iters):
            mapped = apply_map(Qpath / nrm)
            ratio = path_norm(mapped)
            rho = max(rho, ratio)
            if ratio < 1e-14:
                break
            Qpath, nrm = mapped, ratio
    return rho


def check_class_QT(sol: DreSolution, model: LqModel) -> dict:
    """Membership checks for the finite-horizon uniqueness class: continuity,
    symmetry, positive semidefiniteness, terminal zero, and a finite gain
    norm on D(A^eps). Returns named residuals; raises on hard failure."""
    P = sol.P
    sym = float(max(np.linalg.norm(Pk - Pk.T, 2) for Pk in P))
    min_eig = float(min(np.linalg.eigvalsh(0.5 * (Pk + Pk.T)).min() for Pk in P))
    terminal = float(np.linalg.norm(P[-1], 2))
    # continuity: adjacent jumps bounded by the local ODE slope
    dt = float(sol.grid[1] - sol.grid[0])
    slopes = [np.linalg.norm(_riccati_rhs(model, Pk), 2) for Pk in P]
    jump_ok = all(np.linalg.norm(P[i + 1] - P[i], 2) <= 2.0 * dt * max(slopes[i], slopes[i + 1]) + 1e-12
                  for i in range(len(P) - 1))
    Aeps_inv = fractional_power(model.A, -model.assumption.epsilon)
    gain_sup = max(gain_norm_eps(Pk, model, Aeps_inv) for Pk in P)
    checks = {
        "symmetry": sym,
        "min_eigenvalue": min_eig,
        "terminal_norm": terminal,
        "continuity_ok": jump_ok,
        "gain_sup": float(gain_sup),
    }
    scale = max(float(np.linalg.norm(P[0], 2)), 1.0)
    if sym > constants.SYMMETRY_ATOL * scale * 10:
        raise NumericalError(f"solution not symmetric: {sym:.3g}")
    if min_eig < constants.PSD_EIG_FLOOR * scale:
        raise NumericalError(f"solution not PSD: min eigenvalue {min_eig:.3g}")
    if terminal != 0.0 and terminal > 1e-14:
        raise NumericalError("terminal condition P(T)=0 violated")
    if not jump_ok:
        raise NumericalError("continuity jump bound violated")
    if not np.isfinite(gain_sup):
        raise NumericalError("gain norm not finite")
    return checks


def save_csv(sol: DreSolution, model: LqModel, path: str) -> None:
    """One row per node: t, vec(P) row-major, vec(K) row-major."""
    n, m = model.n, model.m
    header = (["t"] + [f"P{i}{j}" for i in range(n) for j in range(n)]
              + [f"K{i}{j}" for i in range(m) for j in range(n)])
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(f"# model_id={model.model_id()} integrator={sol.integrator} "
                     f"kind=dre n={n} m={m}\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            for k, t in enumerate(sol.grid):
                row = ([format(t, ".17g")]
                       + [format(v, ".17g") for v in sol.P[k].ravel()]
                       + [format(v, ".17g") for v in sol.K[k].ravel()])
                writer.writerow(row)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_csv(path: str, n: int, m: int) -> DreSolution:
    with open(path) as fh:
        meta = fh.readline()
        if "kind=dre" not in meta:
            raise NumericalError("not a DRE solution file")
        reader = csv.reader(fh)
        next(reader)  # header
        rows = [[float(v) for v in row] for row in reader if row]
    grid = np.array([r[0] for r in rows])
    P = np.array([np.array(r[1:1 + n * n]).reshape(n, n) for r in rows])
    K = np.array([np.array(r[1 + n * n:1 + n * n + m * n]).reshape(m, n) for r in rows])
    integrator = "rk4"
    for tok in meta.split():
        if tok.startswith("integrator="):
            integrator = tok.split("=", 1)[1]
    return DreSolution(grid, P, K, integrator=integrator)

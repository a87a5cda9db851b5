"""Algebraic Riccati equation: Newton-Kleinman and Hamiltonian-spectral
solvers, the integral ARE residual, the generator identity, and the
value-sandwich uniqueness test.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import constants
from .models import LqModel
from .numkernel import NumericalError, quadrature, solve_lyapunov, trapezoid


@dataclass(frozen=True)
class AreSolution:
    """Constant Riccati operator with gain K = B^T P and closed loop
    A_P = A - B B^T P."""

    P: np.ndarray
    K: np.ndarray
    A_P: np.ndarray
    method: str

    @property
    def closed_loop_abscissa(self) -> float:
        return float(np.max(np.linalg.eigvals(self.A_P).real))


def are_residual_norm(P: np.ndarray, model: LqModel) -> float:
    A, B, R = model.A, model.B, model.R
    return float(np.linalg.norm(A.T @ P + P @ A - P @ B @ B.T @ P + R.T @ R, 2))


def _finish(P: np.ndarray, model: LqModel, method: str) -> AreSolution:
    P = 0.5 * (P + P.T)
    K = model.B.T @ P
    A_P = model.A - model.B @ K
    sol = AreSolution(P, K, A_P, method)
    scale = max(np.linalg.norm(model.A, 2) * np.linalg.norm(P, 2)
                + np.linalg.norm(model.R, 2) ** 2, 1.0)
    resid = are_residual_norm(P, model)
    if resid > constants.ARE_RESIDUAL_RTOL * scale:
        raise NumericalError(f"ARE residual {resid:.3g} exceeds tolerance")
    if np.min(np.linalg.eigvalsh(P)) < constants.PSD_EIG_FLOOR * max(np.linalg.norm(P, 2), 1.0):
        raise NumericalError("ARE solution not PSD")
    if sol.closed_loop_abscissa >= 0:
        raise NumericalError("closed loop not exponentially stable")
    return sol


def solve_are_newton(model: LqModel, tol: float = 1e-12) -> AreSolution:
    """Newton-Kleinman iteration from P_0 = 0 (valid since A is stable):
    each step solves a Lyapunov equation for the current closed loop."""
    _require_infinite_stable(model)
    A, B, R = model.A, model.B, model.R
    n = model.n
    P = np.zeros((n, n))
    if model.m == 0:
        return _finish(solve_lyapunov(A, R.T @ R), model, "newton")
    for _ in range(constants.NEWTON_KLEINMAN_MAX_ITER):
        K = B.T @ P
        Acl = A - B @ K
        if np.max(np.linalg.eigvals(Acl).real) >= 0:
            raise NumericalError("Newton-Kleinman closed loop became unstable")
        P_next = solve_lyapunov(Acl, R.T @ R + K.T @ K)
        step = np.linalg.norm(P_next - P, 2)
        P = P_next
        if step <= tol * max(np.linalg.norm(P, 2), 1.0):
            return _finish(P, model, "newton")
    raise NumericalError("Newton-Kleinman failed to converge in 100 iterations")


def solve_are_spectral(model: LqModel) -> AreSolution:
    """Stable invariant subspace of the Hamiltonian
    [[A, -BB^T], [-R^T R, -A^T]] via an ordered real Schur decomposition."""
    _require_infinite_stable(model)
    A, B, R = model.A, model.B, model.R
    n = model.n
    if model.m == 0:
        return _finish(solve_lyapunov(A, R.T @ R), model, "spectral")
    H = np.block([[A, -B @ B.T], [-R.T @ R, -A.T]])
    eigs = np.linalg.eigvals(H)
    if np.min(np.abs(eigs.real)) < 1e-9 * max(np.max(np.abs(eigs)), 1.0):
        raise NumericalError("Hamiltonian eigenvalue on the imaginary axis")
    _, U, sdim = sla.schur(H, sort=lambda re, im: re < 0)
    if sdim != n:
        raise NumericalError(f"stable subspace has dimension {sdim}, expected {n}")
    X, Y = U[:n, :n], U[n:, :n]
    condX = np.linalg.cond(X)
    if condX > constants.EIGENVECTOR_COND_MAX:
        raise NumericalError(f"subspace basis ill-conditioned (cond {condX:.3g})")
    P = np.linalg.solve(X.T, Y.T).T
    return _finish(P, model, "spectral")


def _require_infinite_stable(model: LqModel):
    if model.finite_horizon:
        raise NumericalError("horizon mismatch: ARE requires an infinite horizon")
    if model.spectral_abscissa() >= 0:
        raise NumericalError("ARE solvers require a stable generator")


def truncation_horizon(model: LqModel, target: float = constants.TAIL_TARGET) -> float:
    """T with M exp(-omega T) <= target, from the recorded stability margin."""
    a = model.assumption
    return float(np.log(a.M / target) / a.omega)


def are_integral_residual(sol: AreSolution, model: LqModel, s: float, t: float,
                          x: np.ndarray, y: np.ndarray, grid_steps: int = 2000) -> float:
    """Residual of the integral form of the ARE between times s and t."""
    if s > t:
        raise NumericalError("need s <= t")
    if t == s:
        return 0.0
    seg = np.linspace(s, t, grid_steps + 1)
    prop = model.propagator()
    ex = prop.apply_batch(seg - s, np.asarray(x, dtype=float))
    ey = prop.apply_batch(seg - s, np.asarray(y, dtype=float))
    P = sol.P
    obs = np.einsum("ki,ij,jl,kl->k", ex, model.R.T, model.R, ey)
    if model.m:
        gx = ex @ sol.K.T
        gy = ey @ sol.K.T
        gain = np.einsum("km,km->k", gx, gy)
    else:
        gain = np.zeros(len(seg))
    lhs = float(ex[-1] @ P @ ey[-1])
    rhs = (float(x @ P @ y) + float(quadrature(gain, seg, rule="simpson"))
           - float(quadrature(obs, seg, rule="simpson")))
    return abs(lhs - rhs)


def generator_identity_check(sol: AreSolution, model: LqModel) -> float:
    """|| A (I - A^-1 B B^T P) - (A - B B^T P) ||, an algebraic identity in
    finite dimensions; must vanish to round-off."""
    A = model.A
    lhs = A @ (np.eye(model.n) - np.linalg.solve(A, model.B @ sol.K))
    return float(np.linalg.norm(lhs - sol.A_P, 2))


def value_sandwich_test(Q: np.ndarray, model: LqModel, x: np.ndarray,
                        T_trunc: float | None = None, grid_steps: int = 20000,
                        reference: AreSolution | None = None) -> tuple[float, float]:
    """Two-sided cost comparison against a candidate ARE solution Q.

    upper_gap = J(u_hat) - (Qx, x) with u_hat the reference optimal feedback;
    lower_gap = (Qx, x) - J(u_Q) with u_Q the feedback -B^T Q y along the
    Q-closed loop. Both within tolerance forces (Qx, x) = (Px, x).
    """
    Q = np.asarray(Q, dtype=float)
    if np.linalg.norm(Q - Q.T, 2) > 1e-10 * max(np.linalg.norm(Q, 2), 1.0):
        raise NumericalError("candidate must be symmetric")
    if np.min(np.linalg.eigvalsh(Q)) < constants.PSD_EIG_FLOOR * max(np.linalg.norm(Q, 2), 1.0):
        raise NumericalError("candidate must be PSD")
    if reference is None:
        reference = solve_are_newton(model)
    if T_trunc is None:
        T_trunc = truncation_horizon(model)
    x = np.asarray(x, dtype=float)
    qxx = float(x @ Q @ x)
    J_hat = _feedback_cost(reference.K, model, x, T_trunc, grid_steps)
    upper_gap = J_hat - qxx
    A_Q = model.A - model.B @ (model.B.T @ Q)
    if np.max(np.linalg.eigvals(A_Q).real) >= 0:
        raise NumericalError("candidate outside admissible closed-loop set")
    J_Q = _feedback_cost(model.B.T @ Q, model, x, T_trunc, grid_steps)
    lower_gap = qxx - J_Q
    return upper_gap, lower_gap


def _feedback_cost(K: np.ndarray, model: LqModel, x: np.ndarray,
                   T: float, grid_steps: int) -> float:
    """J of the feedback u = -K y on [0, T], by RK4 + Simpson on the rate."""
    from scipy.integrate import simpson
    Acl = model.A - model.B @ K
    grid = np.linspace(0.0, T, grid_steps + 1)
    h = grid[1] - grid[0]
    y = np.zeros((len(grid), model.n))
    y[0] = x
    for i in range(grid_steps):
        k1 = Acl @ y[i]
        k2 = Acl @ (y[i] + 0.5 * h * k1)
        k3 = Acl @ (y[i] + 0.5 * h * k2)
        k4 = Acl @ (y[i] + h * k3)
        y[i + 1] = y[i] + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    Ry = y @ model.R.T
    u = -(y @ K.T)
    rate = np.einsum("ki,ki->k", Ry, Ry) + np.einsum("km,km->k", u, u)
    return float(simpson(rate, x=grid))


def save_csv(sol: AreSolution, model: LqModel, path: str) -> None:
    n, m = model.n, model.m
    header = ([f"P{i}{j}" for i in range(n) for j in range(n)]
              + [f"K{i}{j}" for i in range(m) for j in range(n)]
              + ["closed_loop_abscissa", "residual"])
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(f"# model_id={model.model_id()} method={sol.method} kind=are n={n} m={m}\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerow([format(v, ".17g") for v in sol.P.ravel()]
                            + [format(v, ".17g") for v in sol.K.ravel()]
                            + [format(sol.closed_loop_abscissa, ".17g"),
                               format(are_residual_norm(sol.P, model), ".17g")])
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_csv(path: str, model: LqModel) -> AreSolution:
    n, m = model.n, model.m
    with open(path) as fh:
        meta = fh.readline()
        if "kind=are" not in meta:
            raise NumericalError("not an ARE solution file")
        reader = csv.reader(fh)
        next(reader)
        row = [float(v) for v in next(reader)]
    P = np.array(row[:n * n]).reshape(n, n)
    method = "file"
    for tok in meta.split():
        if tok.startswith("method="):
            method = tok.split("=", 1)[1]
    K = model.B.T @ P
    return AreSolution(P, K, model.A - model.B @ K, method)

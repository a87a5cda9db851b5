"""Finite-dimensional surrogate LQ problems.

A model bundles the quadruple (A, B, R, horizon) with the structural data
needed by the verification suites: the set of "parabolic" coordinates that
defines the F/G split of B^T e^{A^T t}, and the assumption parameters
(gamma, N, epsilon, q, omega, eta, M, delta).

Unboundedness of the control map is emulated by grading B's entries against
A's eigenvalues (b_k ~ lambda_k^beta); for heat-like spectra lambda_k ~ k^2
the predicted singular-decay exponent is gamma = beta + 1/4.
"""

from __future__ import annotations

import hashlib
import math
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .numkernel import NumericalError, Propagator, _check_finite

FORMAT_VERSION = "riccati-lab-model/1"


@dataclass(frozen=True)
class AssumptionParams:
    """Constants of the singular-estimate framework the surrogates emulate."""

    gamma: float = 0.5
    N: float = 1.0
    epsilon: float = 0.25
    q: float = 4.0 / 3.0
    omega: float = 1.0
    eta: float = 1.0
    M: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise NumericalError("gamma must lie in (0, 1)")
        if not 1 < self.q < 2:
            raise NumericalError("q must lie in (1, 2)")
        if self.N <= 0 or self.epsilon <= 0 or self.omega <= 0 or self.eta <= 0:
            raise NumericalError("N, epsilon, omega, eta must be positive")
        if self.M < 1 or self.delta < 0:
            raise NumericalError("M >= 1 and delta >= 0 required")
        if self.delta > 0 and self.delta >= min(self.omega, self.eta):
            raise NumericalError("delta must be < min(omega, eta)")

    @property
    def q_prime(self) -> float:
        return self.q / (self.q - 1.0)


@dataclass(frozen=True)
class LqModel:
    """The LQ data (A, B, R, horizon) plus structure and assumption constants.

    parabolic_block holds 0-based coordinate indices; the F component of the
    adjoint kernel is the restriction of B^T e^{A^T t} to those coordinates.
    """

    A: np.ndarray
    B: np.ndarray
    R: np.ndarray
    horizon: float                      # finite T or math.inf
    parabolic_block: tuple[int, ...]
    assumption: AssumptionParams
    name: str = "model"
    _prop_cache: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        A = _check_finite("A", self.A)
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        R = _check_finite("R", self.R)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "R", R)
        n = A.shape[0]
        if A.shape != (n, n):
            raise NumericalError("A must be square")
        if R.shape[1] != n:
            raise NumericalError("R must have n columns")
        if abs(np.linalg.det(A)) == 0.0:
            raise NumericalError("A must be invertible")
        if any(i < 0 or i >= n for i in self.parabolic_block):
            raise NumericalError("parabolic_block indices out of range")
        object.__setattr__(self, "parabolic_block", tuple(sorted(self.parabolic_block)))
        if self.horizon <= 0:
            raise NumericalError("horizon must be positive")
        if math.isinf(self.horizon) and self.spectral_abscissa() >= 0:
            raise NumericalError("infinite-horizon model must have a stable A")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.R.shape[0]

    @property
    def finite_horizon(self) -> bool:
        return math.isfinite(self.horizon)

    def spectral_abscissa(self) -> float:
        return float(np.max(np.linalg.eigvals(self.A).real))

    def propagator(self) -> Propagator:
        if not self._prop_cache:
            self._prop_cache.append(Propagator(self.A))
        return self._prop_cache[0]

    def adjoint_propagator(self) -> Propagator:
        if len(self._prop_cache) < 2:
            self.propagator()
            self._prop_cache.append(Propagator(self.A.T))
        return self._prop_cache[1]

    def with_horizon(self, horizon: float) -> "LqModel":
        return replace(self, horizon=horizon, _prop_cache=[])

    def model_id(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()[:12]


def heat_boundary_surrogate(n: int, beta: float, horizon: float = 1.0) -> LqModel:
    """1-d heat generator with a graded scalar control column.

    A = diag(-(k pi)^2), b_k = sqrt(2) (k pi)^{2 beta}, R = I; the whole state
    is parabolic, so F(t) = B^T e^{A^T t} and G = 0. The spectral prediction
    gamma = beta + 1/4 is recorded in the assumption parameters.
    """
    if n < 1:
        raise NumericalError("n must be >= 1")
    if not 0 <= beta < 1:
        raise NumericalError("beta must lie in [0, 1)")
    k = np.arange(1, n + 1)
    lam = (k * np.pi) ** 2
    A = np.diag(-lam)
    B = (np.sqrt(2.0) * (k * np.pi) ** (2 * beta)).reshape(n, 1)
    R = np.eye(n)
    gamma = min(max(beta + 0.25, 1e-3), 1 - 1e-3)
    omega = float(lam[0])
    N_hat = _rough_singular_scale(A, B, gamma)
    assumption = AssumptionParams(gamma=gamma, N=N_hat, epsilon=0.25, q=4.0 / 3.0,
                                  omega=omega, eta=omega, M=1.0, delta=0.0)
    return LqModel(A, B, R, horizon, tuple(range(n)), assumption,
                   name=f"heat(n={n},beta={beta:g})")


def _rough_singular_scale(A, B, gamma, t_lo=1e-6, t_hi=1e-1, nodes=24):
    """sup over a coarse log grid of t^gamma ||B^T e^{A^T t}||."""
    prop = Propagator(A.T)
    ts = np.geomspace(t_lo, t_hi, nodes)
    vals = [t ** gamma * np.linalg.norm(B.T @ prop.matrix(t), 2) for t in ts]
    return float(max(vals))


def composite_surrogate(n_h: int, n_p: int, kappa: float, damping: float,
                        seed: int = 0, horizon: float = 1.0,
                        max_resamples: int = 20) -> LqModel:
    """Coupled hyperbolic/parabolic block model.

    A = [[S - damping I, kappa C], [-kappa C^T, D]] with S skew-symmetric,
    D = diag(-mu_k) and random coupling C; B pushes into both blocks with
    graded entries on the parabolic block. Stability is verified at
    construction and the coupling resampled if violated.
    """
    if n_h < 1 or n_p < 1:
        raise NumericalError("block dimensions must be >= 1")
    if kappa < 0 or damping <= 0:
        raise NumericalError("kappa >= 0 and damping > 0 required")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    mu = (np.arange(1, n_p + 1) * np.pi) ** 2 / 4.0
    D = np.diag(-mu)
    for _ in range(max_resamples):
        W = rng.standard_normal((n_h, n_h))
        S = 0.5 * (W - W.T)
        C = rng.standard_normal((n_h, n_p)) / np.sqrt(n_h * n_p)
        A = np.block([[S - damping * np.eye(n_h), kappa * C],
                      [-kappa * C.T, D]])
        if np.max(np.linalg.eigvals(A).real) < 0 and abs(np.linalg.det(A)) > 1e-12:
            break
    else:
        raise NumericalError("failed to construct a stable composite generator")
    n = n_h + n_p
    b = np.zeros((n, 1))
    b[:n_h, 0] = rng.standard_normal(n_h) / np.sqrt(n_h)
    kk = np.arange(1, n_p + 1)
    b[n_h:, 0] = np.sqrt(2.0) * (kk * np.pi / 2.0) ** 0.5
    R = np.eye(n)
    omega = -float(np.max(np.linalg.eigvals(A).real))
    assumption = AssumptionParams(gamma=0.5, N=1.0, epsilon=0.25, q=4.0 / 3.0,
                                  omega=omega, eta=omega,
                                  M=_growth_bound(A, omega), delta=0.0)
    block = tuple(range(n_h, n))
    return LqModel(A, b, R, horizon, block, assumption,
                   name=f"composite(n_h={n_h},n_p={n_p},kappa={kappa:g})")


def _growth_bound(A, omega, t_max=20.0, nodes=64):
    """Empirical M with ||e^{At}|| <= M e^{-omega t} on a sample grid."""
    prop = Propagator(A)
    ts = np.linspace(0.0, t_max, nodes)
    vals = [np.linalg.norm(prop.matrix(t), 2) * np.exp(omega * t) for t in ts]
    return float(max(1.0, max(vals)))


def random_stable(n: int, m: int, p: int, seed: int, margin: float,
                  horizon: float = 1.0) -> LqModel:
    """Seeded dense stable model; A is shifted so max Re lambda <= -margin."""
    if margin <= 0:
        raise NumericalError("margin must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    shift = np.max(np.linalg.eigvals(A).real) + margin
    A = A - shift * np.eye(n)
    B = rng.standard_normal((n, m))
    if m:
        B = B / np.maximum(np.linalg.norm(B, axis=0, keepdims=True), 1e-12)
    R = rng.standard_normal((p, n))
    if p:
        R = R / np.maximum(np.linalg.norm(R, axis=0, keepdims=True), 1e-12)
    omega = -float(np.max(np.linalg.eigvals(A).real))
    assumption = AssumptionParams(gamma=0.5, N=1.0, epsilon=0.25, q=4.0 / 3.0,
                                  omega=omega, eta=omega,
                                  M=_growth_bound(A, omega), delta=0.0)
    return LqModel(A, B, R, horizon, tuple(range(n)), assumption,
                   name=f"random(n={n},m={m},p={p},seed={seed})")


def decompose_adjoint_kernel(model: LqModel, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Structural split B^T e^{A^T t} = F(t) + G(t).

    F(t) keeps the columns indexed by the parabolic block, G(t) the rest;
    the sum reproduces the kernel to round-off by construction.
    """
    if t <= 0:
        raise NumericalError("t must be positive")
    K = model.B.T @ model.adjoint_propagator().matrix(t)
    mask = np.zeros(model.n)
    mask[list(model.parabolic_block)] = 1.0
    F = K * mask
    G = K * (1.0 - mask)
    return F, G


# ---------------------------------------------------------------------------
# plain-text persistence ("riccati-lab-model/1")

def _fmt_matrix(M):
    return "\n".join(" ".join(format(v, ".17g") for v in row) for row in np.atleast_2d(M))


def serialize(model: LqModel) -> str:
    a = model.assumption
    lines = [
        f"version = {FORMAT_VERSION}",
        "",
        "[dims]",
        f"n = {model.n}",
        f"m = {model.m}",
        f"p = {model.p}",
        f"horizon = {'inf' if not model.finite_horizon else format(model.horizon, '.17g')}",
        "parabolic_block = " + " ".join(str(i) for i in model.parabolic_block),
        f"name = {model.name}",
        "",
        "[A]",
        _fmt_matrix(model.A),
        "",
        "[B]",
        _fmt_matrix(model.B.reshape(model.n, -1)) if model.m else "",
        "",
        "[R]",
        _fmt_matrix(model.R),
        "",
        "[assumption]",
        f"gamma = {a.gamma:.17g}",
        f"N = {a.N:.17g}",
        f"epsilon = {a.epsilon:.17g}",
        f"q = {a.q:.17g}",
        f"omega = {a.omega:.17g}",
        f"eta = {a.eta:.17g}",
        f"M = {a.M:.17g}",
        f"delta = {a.delta:.17g}",
        "",
    ]
    return "\n".join(lines)


def save(model: LqModel, path: str) -> None:
    """Atomic write (temp file + rename)."""
    text = serialize(model)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load(path: str) -> LqModel:
    with open(path) as fh:
        text = fh.read()
    return deserialize(text)


def deserialize(text: str) -> LqModel:
    sections: dict[str, list[str]] = {"": []}
    current = ""
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        else:
            sections[current].append(line)

    def kv(section):
        out = {}
        for line in sections.get(section, []):
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
        return out

    header = kv("")
    if header.get("version") != FORMAT_VERSION:
        raise NumericalError(f"unsupported model file version {header.get('version')!r}")
    dims = kv("dims")
    n, m, p = int(dims["n"]), int(dims["m"]), int(dims["p"])
    horizon = math.inf if dims["horizon"] == "inf" else float(dims["horizon"])
    block = tuple(int(i) for i in dims.get("parabolic_block", "").split())

    def mat(section, rows, cols):
        if rows == 0 or cols == 0:
            return np.zeros((rows, cols))
        data = [[float(v) for v in line.split()] for line in sections[section]]
        M = np.array(data, dtype=float)
        if M.shape != (rows, cols):
            raise NumericalError(f"[{section}] has shape {M.shape}, expected {(rows, cols)}")
        return M

    ap = {k: float(v) for k, v in kv("assumption").items()}
    assumption = AssumptionParams(**ap)
    return LqModel(mat("A", n, n), mat("B", n, m), mat("R", p, n), horizon,
                   block, assumption, name=dims.get("name", "model"))


def shipped_models(horizon: float = 1.0) -> dict[str, LqModel]:
    """The models every 'per shipped model' property is exercised on."""
    return {
        "scalar": LqModel(np.array([[-1.0]]), np.array([[1.0]]), np.array([[1.0]]),
                          horizon, (0,), AssumptionParams(gamma=0.5, omega=1.0, eta=1.0),
                          name="scalar"),
        "heat": heat_boundary_surrogate(6, 0.25, horizon=horizon),
        "random": random_stable(6, 2, 3, seed=7, margin=0.5, horizon=horizon),
        "composite": composite_surrogate(4, 4, 0.5, 0.3, seed=3, horizon=horizon),
    }

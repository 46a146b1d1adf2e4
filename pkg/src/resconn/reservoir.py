"""Echo-state network: random input/recurrent weights, state recursion and a
ridge-regression readout.

The state update is

    r_in(t) = logistic(W_in [u(t); 1])
    r(t)    = (1 - leak) r(t-1) + leak * tanh(r_in(t) + W r(t-1)),   r(0) = 0

and the readout is ``y(t) = W_out [r(t); 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import linalg

from .errors import NumericalError


@dataclass(frozen=True)
class ReservoirConfig:
    n_units: int = 50
    input_dim: int = 1
    sparsity_in: float = 1.0
    sparsity_rec: float = 1.0
    activation_in: str = "logistic"
    activation_rec: str = "tanh"
    input_scaling: float = 1.0
    input_shift: float = 0.0
    bias_scaling: float = 1.0
    bias_shift: float = 0.0
    spectral_radius: float = 1.0
    leakage: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if self.n_units < 1:
            raise ValueError("n_units must be >= 1")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.spectral_radius <= 0:
            raise ValueError("spectral_radius must be > 0")
        if not 0 < self.leakage <= 1:
            raise ValueError("leakage must lie in (0, 1]")
        for name in ("sparsity_in", "sparsity_rec"):
            s = getattr(self, name)
            if not 0 < s <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.activation_in != "logistic" or self.activation_rec != "tanh":
            raise ValueError("only logistic input and tanh recurrent activations are supported")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Reservoir:
    w_in: np.ndarray  # (N, N_in + 1), last column is the bias
    w_rec: np.ndarray  # (N, N)
    config: ReservoirConfig = field(default_factory=ReservoirConfig)


@dataclass(frozen=True)
class ReadoutWeights:
    w_out: np.ndarray  # (N_out, N + 1), last column is the bias

    def __post_init__(self):
        if not np.all(np.isfinite(self.w_out)):
            raise NumericalError("readout weights are not finite")


def spectral_radius(w: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(w))))


def logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def init_reservoir(config: ReservoirConfig, seed: int | None = None) -> Reservoir:
    """Draw W_in ~ U[-1, 1] (then scale/shift) and W ~ N(0, 1) rescaled to
    the configured spectral radius."""
    if config.n_units < 1:
        raise ValueError("n_units must be >= 1")
    if seed is None:
        seed = config.seed
    rng = np.random.default_rng(seed)
    n, d = config.n_units, config.input_dim
    w_in = rng.uniform(-1.0, 1.0, size=(n, d + 1))
    if config.sparsity_in < 1:
        w_in *= rng.random((n, d + 1)) < config.sparsity_in
    w_in[:, :d] = w_in[:, :d] * config.input_scaling + config.input_shift
    w_in[:, d] = w_in[:, d] * config.bias_scaling + config.bias_shift

    w_rec = rng.standard_normal((n, n))
    if config.sparsity_rec < 1:
        w_rec *= rng.random((n, n)) < config.sparsity_rec
    rho = spectral_radius(w_rec)
    if rho == 0:
        raise NumericalError("recurrent matrix has zero spectral radius; increase sparsity_rec")
    w_rec *= config.spectral_radius / rho
    return Reservoir(w_in, w_rec, config)


def _as_input(u, input_dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != input_dim:
        raise ValueError(f"input must be T x {input_dim}, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("input contains non-finite values")
    return u


def drive_stack(w_in: np.ndarray, w_rec: np.ndarray, u: np.ndarray, leakage: float = 1.0,
                r0: np.ndarray | None = None) -> np.ndarray:
    """Drive K reservoirs with the same input at once.

    ``w_in`` is (K, N, N_in + 1), ``w_rec`` is (K, N, N) and ``u`` is (T, N_in).
    Returns states of shape (T, K, N).
    """
    T = u.shape[0]
    k, n, _ = w_in.shape
    u1 = np.concatenate([u, np.ones((T, 1))], axis=1)
    r_in = logistic(np.einsum("knd,td->tkn", w_in, u1))
    r = np.zeros((k, n)) if r0 is None else np.array(r0, dtype=float).reshape(k, n)
    states = np.empty((T, k, n))
    for t in range(T):
        pre = r_in[t] + np.matmul(w_rec, r[:, :, None])[:, :, 0]
        if leakage == 1.0:
            r = np.tanh(pre)
        else:
            r = (1.0 - leakage) * r + leakage * np.tanh(pre)
        states[t] = r
    return states


def drive(reservoir: Reservoir, u, r0=None) -> np.ndarray:
    """Return the T x N state matrix produced by input ``u`` (T x N_in)."""
    u = _as_input(u, reservoir.config.input_dim)
    states = drive_stack(reservoir.w_in[None], reservoir.w_rec[None], u,
                         reservoir.config.leakage, r0)
    return states[:, 0, :]


def with_bias(states: np.ndarray) -> np.ndarray:
    return np.concatenate([states, np.ones(states.shape[:-1] + (1,))], axis=-1)


def solve_ridge(design: np.ndarray, targets: np.ndarray, alpha: float) -> np.ndarray:
    """Solve (A^T A + alpha I) W = A^T Y with a Cholesky factorisation.

    ``design`` is (T, P) including any bias column; returns W of shape (P, N_out).
    """
    gram = design.T @ design
    if alpha:
        gram[np.diag_indices_from(gram)] += alpha
    rhs = design.T @ targets
    try:
        factor = linalg.cho_factor(gram, check_finite=False)
    except linalg.LinAlgError:
        raise NumericalError("readout normal equations are singular; use alpha > 0") from None
    pivots = np.abs(np.diag(factor[0]))
    if not alpha and pivots.min() <= 1e-10 * pivots.max():
        raise NumericalError("readout normal equations are numerically singular; use alpha > 0")
    w = linalg.cho_solve(factor, rhs, check_finite=False)
    if not np.all(np.isfinite(w)):
        raise NumericalError("readout solution is not finite; use alpha > 0")
    return w


def fit_readout(states, targets, alpha: float = 1e-6) -> ReadoutWeights:
    """Ridge readout W_out = (Y R^T)(R R^T + alpha I)^-1, R = [states; 1]."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    states = np.asarray(states, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if states.shape[0] != targets.shape[0]:
        raise ValueError("states and targets have different lengths")
    w = solve_ridge(with_bias(states), targets, alpha)
    return ReadoutWeights(w.T)


def readout(states, weights: ReadoutWeights) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if states.shape[-1] + 1 != weights.w_out.shape[1]:
        raise ValueError("readout weights do not match the reservoir size")
    return with_bias(states) @ weights.w_out.T


def predict(reservoir: Reservoir, weights: ReadoutWeights, u) -> np.ndarray:
    if weights.w_out.shape[1] != reservoir.config.n_units + 1:
        raise ValueError("readout weights do not match the reservoir size")
    return readout(drive(reservoir, u), weights)

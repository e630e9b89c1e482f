"""DP-FedAvg round math: self-sampling, clipping, distributed Gaussian noise and the accountant."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ParameterError

MAX_ORDER = 64


@dataclass(frozen=True)
class DpConfig:
    q: float
    z: float
    S: float
    W: int
    delta_target: float
    epsilon_budget: float

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ConfigError("q must lie in (0, 1]")
        if self.z <= 0 or self.S <= 0:
            raise ConfigError("z and S must be positive")
        if self.W < 1:
            raise ConfigError("W must be positive")
        if not 0 < self.delta_target < 1:
            raise ConfigError("delta_target must lie in (0, 1)")

    @property
    def sigma(self) -> float:
        return self.z * self.S

    @property
    def delta_recommended(self) -> bool:
        return self.delta_target < 1 / self.W


@dataclass(frozen=True)
class NoisePlan:
    C: int
    A: int
    offline_allowance: int = 0

    def __post_init__(self):
        if self.C - self.A - self.offline_allowance < 1:
            raise ConfigError("C - A - B_off must be at least 1")

    @property
    def honest_floor(self) -> int:
        return self.C - self.A - self.offline_allowance


def is_sampled(device_pk: bytes, beacon: bytes, q: float) -> bool:
    """First 8 bytes of SHA-256(pk || beacon), little-endian, over 2^64 - 1, compared with q."""
    x = int.from_bytes(hashlib.sha256(bytes(device_pk) + bytes(beacon)).digest()[:8], "little")
    return x / float((1 << 64) - 1) < q


def clip(update, S: float) -> np.ndarray:
    if S <= 0:
        raise ParameterError("clipping bound must be positive")
    u = np.asarray(update, dtype=float)
    norm = float(np.linalg.norm(u))
    if norm <= S:
        return u.copy()
    return u * (S / norm)


def noise_share_std(plan: NoisePlan, sigma: float) -> float:
    """Each member's stddev, sized so that C - A - B_off honest shares alone reach sigma."""
    return sigma / math.sqrt(plan.honest_floor)


def sample_noise_share(std: float, dim: int, rng: np.random.Generator) -> np.ndarray:
    if std < 0:
        raise ParameterError("std must be non-negative")
    if std == 0:
        return np.zeros(dim)
    return rng.normal(0.0, std, size=dim)


def order_feasible(q: float, sigma_rel: float, order: int) -> bool:
    if q == 0:
        return True
    if q > 1 / (16 * sigma_rel):
        return False
    return order <= sigma_rel ** 2 * math.log(1 / (q * sigma_rel))


def moments_alpha(q: float, sigma_rel: float, order: int) -> float:
    """Log-moment bound q^2 L (L+1) / ((1 - q) sigma^2) of the subsampled Gaussian.

    The O(q^3 L^2 / sigma^3) remainder is dropped, so this is the leading-order bound.
    """
    if sigma_rel <= 0 or order < 1 or not 0 <= q < 1:
        raise DomainError("need sigma > 0, order >= 1 and 0 <= q < 1")
    if not order_feasible(q, sigma_rel, order):
        raise DomainError(f"bound does not hold at q={q}, sigma={sigma_rel}, order={order}")
    return q * q * order * (order + 1) / ((1 - q) * sigma_rel ** 2)


def _epsilon(history, delta_target: float) -> float:
    if not 0 < delta_target < 1:
        raise DomainError("delta must lie in (0, 1)")
    log_inv_delta = math.log(1 / delta_target)
    best = math.inf
    for order in range(1, MAX_ORDER + 1):
        if not all(order_feasible(q, z, order) for q, z in history):
            continue
        total = sum(moments_alpha(q, z, order) for q, z in history)
        best = min(best, (total + log_inv_delta) / order)
    if math.isinf(best):
        raise DomainError("no feasible moment order in [1, 64]")
    return best


def epsilon_for(T: int, q: float, z: float, delta_target: float) -> float:
    """epsilon after T identical rounds: min over orders L of (T alpha(L) + ln(1/delta)) / L."""
    if T < 0:
        raise ParameterError("T must be non-negative")
    return _epsilon([(q, z)] * T, delta_target)


@dataclass
class AccountantState:
    delta_target: float
    history: list = field(default_factory=list)
    epsilon: float = 0.0

    @property
    def rounds_done(self) -> int:
        return len(self.history)

    def preview(self, q: float, z: float) -> float:
        return _epsilon(self.history + [(q, z)], self.delta_target)

    def record_round(self, q: float, z: float) -> float:
        self.epsilon = self.preview(q, z)
        self.history.append((q, z))
        return self.epsilon

    def recompute(self) -> float:
        return _epsilon(self.history, self.delta_target) if self.history else 0.0


@dataclass(frozen=True)
class ToyDataset:
    X: np.ndarray
    y: np.ndarray


def make_toy_dataset(theta_true: np.ndarray, n: int, rng: np.random.Generator,
                     noise: float = 0.1) -> ToyDataset:
    X = rng.normal(size=(n, theta_true.size))
    return ToyDataset(X, X @ theta_true + noise * rng.normal(size=n))


def squared_loss_grad(theta: np.ndarray, data: ToyDataset) -> np.ndarray:
    resid = data.X @ theta - data.y
    return data.X.T @ resid / len(data.y)


def local_update(model, dataset: ToyDataset, epochs: int, lr: float, S: float) -> np.ndarray:
    """Least-squares gradient steps from ``model``; returns the clipped model delta."""
    theta = np.asarray(model, dtype=float)
    if dataset.X.ndim != 2 or dataset.X.shape[1] != theta.size or dataset.X.shape[0] != dataset.y.size:
        raise ParameterError("dataset shape does not match the model")
    local = theta.copy()
    for _ in range(epochs):
        local -= lr * squared_loss_grad(local, dataset)
    return clip(local - theta, S)

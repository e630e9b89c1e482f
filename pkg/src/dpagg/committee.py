"""Committee sizing from the Chernoff tail bound, and hash-ranked sortition."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigError, DomainError, ParameterError

ROLES = ("master", "dp_noise", "decryption")


@dataclass(frozen=True)
class CommitteeSpec:
    C: int
    A: int
    role: str
    f: float
    index: int = 0  # which decryption committee (0-based); 0 for the others

    def __post_init__(self):
        if not 0 < self.A < self.C:
            raise ConfigError(f"{self.role}: need 0 < A < C, got A={self.A}, C={self.C}")
        if self.role not in ROLES:
            raise ConfigError(f"unknown committee role {self.role!r}")

    @property
    def t_frac(self) -> float:
        return self.A / self.C

    @property
    def label(self) -> str:
        return f"decryption-{self.index}" if self.role == "decryption" else self.role

    def failure_prob(self) -> float:
        return failure_prob(self.f, self.t_frac, self.C)


def log_failure_prob(f: float, t_frac: float, C: int) -> float:
    if not (0 < f <= t_frac < 1):
        raise DomainError(f"bound needs 0 < f <= t < 1, got f={f}, t={t_frac}")
    return -f * C + t_frac * C * (1 + math.log(f / t_frac))


def failure_prob(f: float, t_frac: float, C: int) -> float:
    """Upper bound e^{-fC} (e f / t)^{tC} on Pr[more than tC malicious members]."""
    return math.exp(log_failure_prob(f, t_frac, C))


def plan_size(f: float, t_frac: float, p_target: float, c_max: int = 10 ** 7) -> int:
    """Smallest C whose failure bound is at most p_target."""
    if not 0 < p_target <= 1:
        raise ParameterError("p_target must lie in (0, 1]")
    if t_frac <= f:
        raise DomainError("t_frac must exceed f for the bound to decay")
    goal = math.log(p_target)
    if log_failure_prob(f, t_frac, 1) <= goal:
        return 1
    # the log-bound is linear in C with negative slope, so bisect
    lo, hi = 1, 2
    while log_failure_prob(f, t_frac, hi) > goal:
        lo, hi = hi, hi * 2
        if hi > c_max:
            raise ConfigError(f"no committee size up to {c_max} reaches {p_target}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if log_failure_prob(f, t_frac, mid) <= goal:
            hi = mid
        else:
            lo = mid
    return hi


def rank_key(beacon: bytes, salt: bytes, device_id: bytes) -> bytes:
    return hashlib.sha256(bytes(beacon) + bytes(salt) + bytes(device_id)).digest()


def sortition(population: Sequence[bytes], beacon: bytes, C: int, salt: bytes | str) -> list[bytes]:
    """The C devices with the smallest hash rank; anyone can recompute it from the beacon."""
    if isinstance(salt, str):
        salt = salt.encode()
    if C > len(population):
        raise ConfigError(f"committee of {C} exceeds population of {len(population)}")
    if C < 0:
        raise ParameterError("committee size must be non-negative")
    ranked = sorted(population, key=lambda d: rank_key(beacon, salt, d))
    return ranked[:C]


def select_disjoint(population: Sequence[bytes], beacon: bytes,
                    specs: Iterable[CommitteeSpec]) -> dict[str, list[bytes]]:
    """Draw committees one after another from the devices not yet chosen."""
    specs = list(specs)
    need = sum(s.C for s in specs)
    if need > len(population):
        raise ConfigError(f"committees need {need} distinct devices, population has {len(population)}")
    taken: set[bytes] = set()
    out = {}
    for spec in specs:
        pool = [d for d in population if d not in taken]
        members = sortition(pool, beacon, spec.C, spec.label)
        taken.update(members)
        out[spec.label] = members
    return out


def union_failure_bound(specs: Iterable[CommitteeSpec]) -> float:
    return min(1.0, sum(s.failure_prob() for s in specs))

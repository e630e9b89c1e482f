"""World configuration: JSON loading with field-path error messages."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from . import params as P
from .errors import ConfigError

BEHAVIOURS = ("omit-noise-leaf", "modify-leaf-ct", "duplicate-input", "scalar-multiply-leaf",
              "replay-prev-round", "sybil-inflate", "corrupt-nonleaf-eval", "corrupt-root",
              "biased-committee-pick")

NAMED_MODULI = {"Q120": P.Q120, "Q61": P.Q61}


@dataclass(frozen=True)
class CommitteeConfig:
    C: int
    A: int
    offline_allowance: int = 0


@dataclass(frozen=True)
class AheConfig:
    degree: int = P.DESK_DEGREE
    modulus: int = P.Q120
    t_plain: int = P.T_PLAIN
    scale: float = P.FIXED_POINT_SCALE
    smudge_lambda: int = P.SMUDGE_LAMBDA


def _default_committees() -> dict:
    return {role: CommitteeConfig(C, A) for role, (A, C) in P.COMMITTEE_DEFAULTS.items()}


@dataclass(frozen=True)
class WorldConfig:
    W: int = 2000
    f: float = 0.03
    q: float = 0.05
    z: float = 1.0
    S: float = 1.0
    rounds: int = 1
    delta: float = 1e-5
    epsilon_budget: float = 10.0
    model_dim: int = 4 * (P.DESK_DEGREE - 1)
    samples_per_device: int = 16
    local_epochs: int = 1
    lr: float = 0.1
    ahe: AheConfig = field(default_factory=AheConfig)
    committees: dict = field(default_factory=_default_committees)
    num_decryption_committees: int = P.NUM_DECRYPTION_COMMITTEES
    s: int = P.SPOT_CHECKS
    verify_prob: float = 1.0
    pit: bool = True
    w_max_factor: float = 1.5
    offline_frac: float = 0.0
    union_bound_target: float | None = None
    seed: int = 0
    adversary: tuple[str, ...] = ()

    def __post_init__(self):
        _check(self.W >= 1, "W", "must be a positive integer")
        _check(0 <= self.f < 1, "f", "must lie in [0, 1)")
        _check(0 < self.q <= 1, "q", "must lie in (0, 1]")
        _check(self.z > 0, "z", "must be positive")
        _check(self.S > 0, "S", "must be positive")
        _check(self.rounds >= 1, "rounds", "must be at least 1")
        _check(0 < self.delta < 1, "delta", "must lie in (0, 1)")
        _check(self.model_dim >= 1, "model_dim", "must be positive")
        _check(self.s >= 1, "s", "must be at least 1")
        _check(0 <= self.verify_prob <= 1, "verify_prob", "must lie in [0, 1]")
        _check(self.w_max_factor >= 1, "w_max_factor", "must be at least 1")
        _check(0 <= self.offline_frac < 1, "offline_frac", "must lie in [0, 1)")
        _check(self.num_decryption_committees >= 1, "num_decryption_committees", "must be at least 1")
        for role in ("master", "dp_noise", "decryption"):
            _check(role in self.committees, f"committees.{role}", "is required")
            c = self.committees[role]
            _check(0 < c.A < c.C, f"committees.{role}.A", "must satisfy 0 < A < C")
            _check(c.C - c.A - c.offline_allowance >= 1, f"committees.{role}.offline_allowance",
                   "must leave C - A - B_off >= 1")
        for b in self.adversary:
            _check(b in BEHAVIOURS, "adversary", f"unknown behaviour {b!r}")
        need = self.committees["master"].C + self.committees["dp_noise"].C \
            + self.active_decryption_committees * self.committees["decryption"].C
        _check(need < self.W, "committees", f"need {need} distinct devices but W={self.W}")

    @property
    def num_trees(self) -> int:
        return math.ceil(self.model_dim / (self.ahe.degree - 1))

    @property
    def active_decryption_committees(self) -> int:
        return min(self.num_decryption_committees, self.num_trees)

    @property
    def W_max(self) -> int:
        return math.ceil(self.w_max_factor * self.W)

    def with_overrides(self, **kw) -> "WorldConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "adversary" in kw:
            kw["adversary"] = tuple(kw["adversary"])
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adversary"] = list(self.adversary)
        return d


def _check(ok: bool, path: str, msg: str) -> None:
    if not ok:
        raise ConfigError(f"{path}: {msg}")


def _typed(value: Any, kind: type, path: str):
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is bool and isinstance(value, bool):
        return value
    raise ConfigError(f"{path}: expected {kind.__name__}, got {type(value).__name__}")


_SCALARS = {"W": int, "f": float, "q": float, "z": float, "S": float, "rounds": int, "delta": float,
            "epsilon_budget": float, "model_dim": int, "samples_per_device": int,
            "local_epochs": int, "lr": float, "num_decryption_committees": int, "s": int,
            "verify_prob": float, "pit": bool, "w_max_factor": float, "offline_frac": float,
            "seed": int}
REQUIRED = ("W", "q", "z", "S", "rounds", "seed")


def from_dict(raw: dict) -> WorldConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>: expected a JSON object")
    known = {f.name for f in fields(WorldConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"{key}: missing required field")
    kw: dict[str, Any] = {k: _typed(raw[k], t, k) for k, t in _SCALARS.items() if k in raw}
    if raw.get("union_bound_target") is not None:
        kw["union_bound_target"] = _typed(raw["union_bound_target"], float, "union_bound_target")
    if "adversary" in raw:
        adv = raw["adversary"]
        if isinstance(adv, str):
            adv = [adv]
        if not isinstance(adv, list):
            raise ConfigError("adversary: expected a list of behaviour names")
        kw["adversary"] = tuple(adv)
    if "ahe" in raw:
        a = raw["ahe"]
        if not isinstance(a, dict):
            raise ConfigError("ahe: expected an object")
        akw = {}
        for k, t in (("degree", int), ("t_plain", int), ("scale", float), ("smudge_lambda", int)):
            if k in a:
                akw[k] = _typed(a[k], t, f"ahe.{k}")
        if "modulus" in a:
            m = a["modulus"]
            if isinstance(m, str):
                if m not in NAMED_MODULI:
                    raise ConfigError(f"ahe.modulus: unknown named modulus {m!r}")
                m = NAMED_MODULI[m]
            akw["modulus"] = _typed(m, int, "ahe.modulus")
        extra = set(a) - {"degree", "modulus", "t_plain", "scale", "smudge_lambda"}
        if extra:
            raise ConfigError(f"ahe.{sorted(extra)[0]}: unknown field")
        kw["ahe"] = AheConfig(**akw)
    if "committees" in raw:
        comm = _default_committees()
        for role, spec in raw["committees"].items():
            if role not in comm:
                raise ConfigError(f"committees.{role}: unknown committee role")
            for k in ("C", "A"):
                if k not in spec:
                    raise ConfigError(f"committees.{role}.{k}: missing required field")
            comm[role] = CommitteeConfig(_typed(spec["C"], int, f"committees.{role}.C"),
                                         _typed(spec["A"], int, f"committees.{role}.A"),
                                         _typed(spec.get("offline_allowance", 0), int,
                                                f"committees.{role}.offline_allowance"))
        kw["committees"] = comm
    return WorldConfig(**kw)


def load(path: str | Path) -> WorldConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"<root>: invalid JSON ({e})") from None
    except OSError as e:
        raise ConfigError(f"<root>: cannot read {path} ({e.strerror})") from None
    return from_dict(raw)

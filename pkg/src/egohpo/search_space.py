"""Hyperparameter domains and the warped unit-cube bijection.

Each parameter is warped (identity, ``log10`` or ``logit``) and then mapped
affinely so that its lower bound lands on 0 and its upper bound on 1. All
surrogate modelling and design sampling happens in that unit cube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from egohpo.errors import ConfigError, DomainError

WARPS = ("identity", "log10", "logit")


def _logit(p):
    return np.log(p / (1.0 - p))


def _expit(z):
    return 1.0 / (1.0 + np.exp(-z))


_FORWARD = {"identity": lambda v: v, "log10": np.log10, "logit": _logit}
_INVERSE = {"identity": lambda w: w, "log10": lambda w: np.power(10.0, w), "logit": _expit}


def round_half_up(v):
    return math.floor(v + 0.5)


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    lower: float
    upper: float
    warp: str = "identity"
    integer: bool = False

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise ConfigError("parameter name must be a non-empty string")
        lo, hi = float(self.lower), float(self.upper)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ConfigError(f"{self.name}: bounds must be finite")
        if not lo < hi:
            raise ConfigError(f"{self.name}: lower {lo} must be < upper {hi}")
        if self.warp not in WARPS:
            raise ConfigError(f"{self.name}: unknown warp {self.warp!r}")
        if self.warp == "log10" and lo <= 0:
            raise ConfigError(f"{self.name}: log10 warp needs lower > 0")
        if self.warp == "logit" and not (0 < lo and hi < 1):
            raise ConfigError(f"{self.name}: logit warp needs 0 < lower and upper < 1")
        if self.integer and round_half_up(hi) - round_half_up(lo) < 1:
            raise ConfigError(f"{self.name}: integer range must span at least 1")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def warped_bounds(self) -> tuple[float, float]:
        f = _FORWARD[self.warp]
        return float(f(self.lower)), float(f(self.upper))

    def to_unit(self, raw: float) -> float:
        raw = float(raw)
        if not (self.lower <= raw <= self.upper):
            raise DomainError(
                f"{self.name}: value {raw!r} outside [{self.lower!r}, {self.upper!r}]"
            )
        if raw == self.lower:
            return 0.0
        if raw == self.upper:
            return 1.0
        wl, wu = self.warped_bounds
        u = (float(_FORWARD[self.warp](raw)) - wl) / (wu - wl)
        return min(1.0, max(0.0, u))

    def from_unit(self, u: float) -> float:
        u = float(u)
        if not (0.0 <= u <= 1.0):
            raise DomainError(f"{self.name}: unit coordinate {u!r} outside [0, 1]")
        if u == 0.0:
            v = self.lower
        elif u == 1.0:
            v = self.upper
        else:
            wl, wu = self.warped_bounds
            v = float(_INVERSE[self.warp](wl + u * (wu - wl)))
        if self.integer:
            v = float(round_half_up(v))
        return min(self.upper, max(self.lower, v))


class SearchSpace:
    """An ordered collection of :class:`ParameterSpec`."""

    def __init__(self, params: Sequence[ParameterSpec]):
        params = tuple(params)
        if not params:
            raise ConfigError("search space needs at least one parameter")
        names = [p.name for p in params]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"duplicate parameter names: {', '.join(dupes)}")
        self.params = params

    @classmethod
    def from_dicts(cls, items) -> "SearchSpace":
        return cls([ParameterSpec(**item) for item in items])

    def to_dicts(self) -> list[dict]:
        return [
            {"name": p.name, "lower": p.lower, "upper": p.upper, "warp": p.warp, "integer": p.integer}
            for p in self.params
        ]

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def __len__(self):
        return len(self.params)

    def __iter__(self):
        return iter(self.params)

    def __eq__(self, other):
        return isinstance(other, SearchSpace) and self.params == other.params

    def __repr__(self):
        return f"SearchSpace({list(self.params)!r})"

    def _check_len(self, v):
        if len(v) != self.dim:
            raise DomainError(f"expected {self.dim} values, got {len(v)}")

    def to_unit(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=float).ravel()
        self._check_len(raw)
        return np.array([p.to_unit(r) for p, r in zip(self.params, raw)])

    def from_unit(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).ravel()
        self._check_len(u)
        return np.array([p.from_unit(c) for p, c in zip(self.params, u)])

    def as_dict(self, raw) -> dict[str, float]:
        raw = np.asarray(raw, dtype=float).ravel()
        self._check_len(raw)
        return {p.name: (int(r) if p.integer else float(r)) for p, r in zip(self.params, raw)}


def to_unit(space: SearchSpace, raw) -> np.ndarray:
    return space.to_unit(raw)


def from_unit(space: SearchSpace, u) -> np.ndarray:
    return space.from_unit(u)


def round_trip_check(space: SearchSpace, raw) -> np.ndarray:
    """Map ``raw`` to the unit cube and back."""
    return space.from_unit(space.to_unit(raw))


def ppo_space() -> SearchSpace:
    """The six PPO hyperparameters with the warps used for driving-policy tuning."""
    return SearchSpace(
        [
            ParameterSpec("batch_size", 512, 2560, "identity", True),
            ParameterSpec("time_horizon", 64, 600, "identity", True),
            ParameterSpec("discount", 0.90, 0.99, "logit", False),
            ParameterSpec("learning_rate", 1e-5, 1e-3, "log10", False),
            ParameterSpec("ppo_epochs", 3, 10, "identity", True),
            ParameterSpec("beta", 1e-4, 1e-2, "log10", False),
        ]
    )

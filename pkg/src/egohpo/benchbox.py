"""Built-in black boxes and evaluator wrappers.

An evaluator maps a parameter dict (raw units, in search-space order) to a
response in the user's direction. ``eval_id`` and ``seed`` identify the
evaluation so stochastic evaluators stay reproducible.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import time
from typing import Callable, Mapping

import numpy as np

from egohpo.errors import ConfigError, DomainError, EvaluationError
from egohpo.search_space import ppo_space


def _vec(x, d=None):
    x = np.asarray(x, dtype=float).ravel()
    if d is not None and x.size != d:
        raise DomainError(f"expected {d} coordinates, got {x.size}")
    return x


def branin(x) -> float:
    """Branin-Hoo on [-5, 10] x [0, 15]; global minimum 0.397887 at three points."""
    x1, x2 = _vec(x, 2)
    if not (-5.0 <= x1 <= 10.0 and 0.0 <= x2 <= 15.0):
        raise DomainError(f"branin domain is [-5, 10] x [0, 15], got ({x1}, {x2})")
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi
    t = 1.0 / (8.0 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * math.cos(x1) + 10.0


def sphere(x) -> float:
    x = _vec(x)
    return float(x @ x)


_H6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_H6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)

HARTMANN6_MIN = -3.32237
HARTMANN6_ARGMIN = (0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573)


def hartmann6(x) -> float:
    """Six-dimensional Hartmann function on [0, 1]^6."""
    x = _vec(x, 6)
    if np.any(x < 0) or np.any(x > 1):
        raise DomainError("hartmann6 domain is [0, 1]^6")
    inner = np.sum(_H6_A * (x - _H6_P) ** 2, axis=1)
    return float(-np.sum(_H6_ALPHA * np.exp(-inner)))


# Synthetic reward surface over the six PPO hyperparameters, in warped unit
# coordinates (batch, horizon, discount, lr, epochs, beta).
_RL6_PEAK = np.array([0.70, 0.62, 0.59, 0.78, 0.30, 0.68])
_RL6_WIDTH = np.array([0.25, 0.45, 0.30, 0.22, 0.35, 0.40])
_RL6_TREND = np.array([120.0, 10.0, 50.0, 160.0, -90.0, 30.0])
_RL6_SIDE = np.array([0.20, 0.30, 0.80, 0.35, 0.70, 0.25])
RL6_NOISE_SD = 15.0


def rl6_mean(raw) -> float:
    """Noise-free synthetic reward, maximized in the interior of the space."""
    u = ppo_space().to_unit(_vec(raw, 6))
    peak = 380.0 * math.exp(-0.5 * float(np.sum(((u - _RL6_PEAK) / _RL6_WIDTH) ** 2)))
    side = 150.0 * math.exp(-0.5 * float(np.sum(((u - _RL6_SIDE) / 0.15) ** 2)))
    ripple = 25.0 * math.cos(3.0 * math.pi * u[0]) * math.cos(3.0 * math.pi * u[3])
    return 750.0 + peak + side + ripple + float(_RL6_TREND @ u)


def rl_surrogate6(raw, seed: int = 0, noise_sd: float = RL6_NOISE_SD) -> float:
    """:func:`rl6_mean` plus Gaussian noise drawn from ``seed``."""
    value = rl6_mean(raw)
    if noise_sd > 0:
        value += noise_sd * float(np.random.default_rng([int(seed), 60006]).standard_normal())
    return value


class Evaluator:
    """Base class for black boxes; subclasses implement :meth:`evaluate`."""

    kind = "builtin"
    name = "evaluator"
    direction = "minimize"

    def evaluate(self, params: Mapping[str, float], eval_id: int = 0, seed: int = 0) -> float:
        raise NotImplementedError

    def __call__(self, params, eval_id: int = 0, seed: int = 0) -> float:
        return self.evaluate(params, eval_id=eval_id, seed=seed)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, direction={self.direction!r})"


class FunctionEvaluator(Evaluator):
    """Wraps ``func(x, seed)`` where ``x`` is the parameter vector."""

    def __init__(self, name: str, func: Callable[[np.ndarray, int], float], direction="minimize"):
        self.name = name
        self.func = func
        self.direction = direction

    def evaluate(self, params, eval_id=0, seed=0):
        x = np.array([float(v) for v in params.values()])
        return float(self.func(x, seed))


class NoisyEvaluator(Evaluator):
    def __init__(self, inner: Evaluator, sigma: float, seed: int = 0):
        if sigma < 0:
            raise DomainError("noise sigma must be >= 0")
        self.inner, self.sigma, self.seed = inner, float(sigma), int(seed)
        self.name = f"noisy({inner.name})"
        self.direction = inner.direction
        self.kind = inner.kind

    def evaluate(self, params, eval_id=0, seed=0):
        value = self.inner.evaluate(params, eval_id=eval_id, seed=seed)
        if self.sigma == 0:
            return value
        rng = np.random.default_rng([self.seed, int(eval_id), int(seed)])
        return value + self.sigma * float(rng.standard_normal())


class LatencyEvaluator(Evaluator):
    def __init__(self, inner: Evaluator, seconds: float):
        if seconds < 0:
            raise DomainError("latency must be >= 0")
        self.inner, self.seconds = inner, float(seconds)
        self.name = f"slow({inner.name})"
        self.direction = inner.direction
        self.kind = inner.kind

    def evaluate(self, params, eval_id=0, seed=0):
        time.sleep(self.seconds)
        return self.inner.evaluate(params, eval_id=eval_id, seed=seed)


def with_noise(inner: Evaluator, sigma: float, seed: int = 0) -> Evaluator:
    return NoisyEvaluator(inner, sigma, seed)


def with_latency(inner: Evaluator, seconds: float) -> Evaluator:
    return LatencyEvaluator(inner, seconds)


class CommandEvaluator(Evaluator):
    """Runs an external command once per evaluation.

    The command receives ``{"eval_id": int, "seed": int, "params": {...}}`` as
    JSON on stdin. The last non-blank line of stdout must be a finite number.
    A nonzero exit status, a timeout or unparseable output is a failure.
    """

    kind = "command"

    def __init__(self, command, direction="minimize", timeout_s=None, cwd=None):
        self.argv = shlex.split(command) if isinstance(command, str) else [str(c) for c in command]
        if not self.argv:
            raise ConfigError("empty black-box command")
        self.name = " ".join(self.argv)
        self.direction = direction
        self.timeout_s = timeout_s
        self.cwd = cwd

    def evaluate(self, params, eval_id=0, seed=0):
        payload = json.dumps({"eval_id": int(eval_id), "seed": int(seed), "params": dict(params)})
        try:
            proc = subprocess.run(
                self.argv, input=payload, capture_output=True, text=True,
                timeout=self.timeout_s, cwd=self.cwd,
            )
        except subprocess.TimeoutExpired as exc:
            raise EvaluationError(f"eval {eval_id}: timed out after {self.timeout_s}s") from exc
        except OSError as exc:
            raise EvaluationError(f"eval {eval_id}: could not start command: {exc}") from exc
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-1:] or [""]
            raise EvaluationError(f"eval {eval_id}: exit status {proc.returncode} {tail[0]}".rstrip())
        return parse_response(proc.stdout, eval_id)


def parse_response(stdout: str, eval_id=0) -> float:
    lines = [ln.strip() for ln in stdout.strip().splitlines() if ln.strip()]
    if not lines:
        raise EvaluationError(f"eval {eval_id}: command printed nothing")
    try:
        value = float(lines[-1])
    except ValueError:
        raise EvaluationError(f"eval {eval_id}: last output line {lines[-1]!r} is not a number") from None
    if not math.isfinite(value):
        raise EvaluationError(f"eval {eval_id}: response {lines[-1]!r} is not finite")
    return value


BUILTINS: dict[str, tuple[Callable[[np.ndarray, int], float], str]] = {
    "branin": (lambda x, seed: branin(x), "minimize"),
    "sphere": (lambda x, seed: sphere(x), "minimize"),
    "hartmann6": (lambda x, seed: hartmann6(x), "minimize"),
    "rl6": (lambda x, seed: rl_surrogate6(x, seed), "maximize"),
}


def builtin(name: str, direction: str | None = None) -> Evaluator:
    key = name.split(":", 1)[1] if name.startswith("builtin:") else name
    if key not in BUILTINS:
        raise ConfigError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}")
    func, natural = BUILTINS[key]
    return FunctionEvaluator(key, func, direction or natural)


def from_config(blackbox: Mapping, direction: str, base_dir=None) -> Evaluator:
    """Build an evaluator from the ``blackbox`` section of a run config."""
    kind = blackbox["kind"]
    if kind == "builtin":
        ev = builtin(blackbox["builtin"], direction)
    elif kind == "command":
        ev = CommandEvaluator(
            blackbox["command"], direction, blackbox.get("timeout_s"), cwd=base_dir
        )
    else:
        raise ConfigError(f"unknown black-box kind {kind!r}")
    if blackbox.get("noise_sd", 0):
        ev = with_noise(ev, blackbox["noise_sd"], blackbox.get("noise_seed", 0))
    if blackbox.get("latency_s", 0):
        ev = with_latency(ev, blackbox["latency_s"])
    return ev

"""The EGO loop: Latin hypercube initialization, then fit, propose, evaluate."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from egohpo.acquisition import AcquisitionContext, SearchBudget, propose_batch
from egohpo.doe import lhs_sample
from egohpo.errors import DomainError, EvaluationError
from egohpo.gp import GpConfig, fit, loo_r_squared
from egohpo.search_space import SearchSpace

log = logging.getLogger(__name__)

DIRECTIONS = ("minimize", "maximize")


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def eval_seed(seed: int, eval_id: int) -> int:
    return derive_seed(seed, 1, eval_id)


def to_internal(response: float, direction: str) -> float:
    return -response if direction == "maximize" else response


@dataclass
class Observation:
    eval_id: int
    phase: str
    u: np.ndarray
    raw: np.ndarray
    response: float | None
    internal: float | None
    status: str = "ok"
    duration_s: float = 0.0
    imputed: bool = False

    def same_as(self, other: "Observation") -> bool:
        return (
            self.eval_id == other.eval_id
            and self.phase == other.phase
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.raw, other.raw)
            and self.response == other.response
            and self.internal == other.internal
            and self.status == other.status
            and self.duration_s == other.duration_s
            and self.imputed == other.imputed
        )


@dataclass
class BatchRecord:
    """Audit record for one EGO batch: which model proposed which evaluations."""

    index: int
    n_train: int
    last_train_eval_id: int
    model_digest: str
    kernel: dict
    nlml: float
    loo_r2: float | None
    f_min: float
    eval_ids: list[int]
    scores: list[float]
    qei: float | None
    degenerate: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d) -> "BatchRecord":
        return cls(**d)


@dataclass
class RunHistory:
    space: SearchSpace
    direction: str = "minimize"
    config_digest: str = ""
    observations: list[Observation] = field(default_factory=list)
    batches: list[BatchRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.observations)

    def append(self, obs: Observation):
        if obs.eval_id != len(self.observations):
            raise DomainError(f"eval_id {obs.eval_id} breaks the dense sequence at {len(self.observations)}")
        if obs.phase == "init" and any(o.phase == "ego" for o in self.observations):
            raise DomainError("init observation after the EGO phase started")
        self.observations.append(obs)

    def phase_count(self, phase: str) -> int:
        return sum(o.phase == phase for o in self.observations)

    def ok(self) -> list[Observation]:
        return [o for o in self.observations if o.status == "ok"]

    def training_data(self) -> tuple[np.ndarray, np.ndarray, list[int]]:
        """Design, internal responses and eval_ids used for fitting.

        Failed observations enter with their imputed value; ones recorded
        before any success take the worst successful value overall.
        """
        ok_vals = [o.internal for o in self.observations if o.status == "ok"]
        if not ok_vals:
            raise EvaluationError("no successful evaluations to fit")
        worst = max(ok_vals)
        X = np.array([o.u for o in self.observations])
        y = np.array([o.internal if o.internal is not None else worst for o in self.observations])
        return X, y, [o.eval_id for o in self.observations]

    def best(self) -> Observation:
        ok = self.ok()
        if not ok:
            raise DomainError("history has no successful observations")
        return min(ok, key=lambda o: o.internal)


def impute_failed(history: RunHistory, obs: Observation) -> Observation:
    """Fill a failed observation with the worst successful value seen so far."""
    prior = [o.internal for o in history.observations if o.status == "ok" and o.eval_id < obs.eval_id]
    obs.internal = max(prior) if prior else None
    obs.imputed = True
    obs.response = None
    return obs


@dataclass(frozen=True)
class BudgetPlan:
    n_init: int
    n_opt: int
    q: int = 1

    def validate(self, d: int):
        if self.q < 1:
            raise DomainError("q must be >= 1")
        if self.n_init < d + 2:
            raise DomainError(f"n_init must be >= d + 2 = {d + 2}, got {self.n_init}")
        if self.n_opt < self.q:
            raise DomainError(f"n_opt ({self.n_opt}) must be >= q ({self.q})")

    @classmethod
    def split(cls, total: int, q: int = 1, init_fraction: float = 0.5) -> "BudgetPlan":
        n_init = int(round(total * init_fraction))
        return cls(n_init=n_init, n_opt=total - n_init, q=q)


@dataclass
class DriverConfig:
    seed: int = 0
    direction: str = "minimize"
    gp: GpConfig = field(default_factory=GpConfig)
    acquisition: str = "qei"
    mc_samples: int = 4096
    search: SearchBudget = field(default_factory=SearchBudget)
    init_parallelism: int = 8
    # caps concurrent evaluations in both phases; None means no extra cap
    parallel: int | None = None
    on_batch: Callable | None = None

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise DomainError(f"direction must be one of {DIRECTIONS}")


def _evaluate_one(blackbox, space, u, eval_id, phase, seed, direction) -> Observation:
    raw = space.from_unit(u)
    params = space.as_dict(raw)
    es = eval_seed(seed, eval_id)
    t0 = time.perf_counter()
    response = None
    for attempt in (1, 2):
        try:
            value = float(blackbox(params, eval_id=eval_id, seed=es))
            if not math.isfinite(value):
                raise EvaluationError(f"eval {eval_id}: non-finite response {value}")
            response = value
            break
        except Exception as exc:  # any evaluator failure counts; retried once
            log.warning("eval %d attempt %d failed: %s", eval_id, attempt, exc)
    status = "ok" if response is not None else "failed"
    duration = time.perf_counter() - t0
    return Observation(
        eval_id=eval_id, phase=phase, u=space.to_unit(raw), raw=raw,
        response=response,
        internal=None if response is None else to_internal(response, direction),
        status=status, duration_s=duration,
    )


def _evaluate_batch(blackbox, space, units, first_id, phase, config, workers, history):
    jobs = [(u, first_id + i) for i, u in enumerate(units)]
    call = lambda job: _evaluate_one(blackbox, space, job[0], job[1], phase, config.seed, config.direction)
    if workers <= 1 or len(jobs) == 1:
        results = [call(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(call, jobs))
    for obs in results:
        if obs.status == "failed":
            impute_failed(history, obs)
        history.append(obs)
    return results


def _cap(n, parallel):
    return max(1, min(n, parallel)) if parallel else max(1, n)


def run(space: SearchSpace, blackbox, plan: BudgetPlan, config: DriverConfig | None = None,
        history: RunHistory | None = None) -> RunHistory:
    """Run Latin hypercube initialization followed by batch EGO.

    Pass a partially filled ``history`` to resume; with the same seed and a
    pure black box the result equals an uninterrupted run.
    """
    config = config or DriverConfig()
    d = space.dim
    plan.validate(d)
    if history is None:
        history = RunHistory(space=space, direction=config.direction)
    elif history.direction != config.direction or history.space != space:
        raise DomainError("history does not match the search space or direction")

    design = lhs_sample(d, plan.n_init, config.seed).points
    init_workers = _cap(config.init_parallelism, config.parallel)
    done = history.phase_count("init")
    while done < plan.n_init:
        chunk = design[done:done + init_workers]
        new = _evaluate_batch(blackbox, space, chunk, len(history), "init", config, init_workers, history)
        done += len(chunk)
        if config.on_batch:
            config.on_batch(history, new, None)

    ego_workers = _cap(plan.q, config.parallel)
    n_ego = history.phase_count("ego")
    k = len(history.batches)
    while n_ego < plan.n_opt:
        q = min(plan.q, plan.n_opt - n_ego)
        X, y, ids = history.training_data()
        model = fit(X, y, replace(config.gp, seed=derive_seed(config.seed, 2, k)))
        f_min = float(np.min(y))
        ctx = AcquisitionContext(f_min=f_min, mc_samples=config.mc_samples, seed=derive_seed(config.seed, 3, k))
        batch = propose_batch(model, d, q, ctx, config.search, kind=config.acquisition)
        try:
            r2 = loo_r_squared(model)
        except DomainError:
            r2 = None
        first = len(history)
        record = BatchRecord(
            index=k, n_train=len(ids), last_train_eval_id=max(ids), model_digest=model.digest(),
            kernel=model.kernel.to_dict(), nlml=float(model.nlml_value), loo_r2=r2, f_min=f_min,
            eval_ids=list(range(first, first + q)), scores=[float(s) for s in batch.scores],
            qei=batch.qei, degenerate=batch.degenerate,
        )
        log.info("batch %d: n=%d f_min=%.6g loo_r2=%s", k, len(ids), f_min, r2)
        new = _evaluate_batch(blackbox, space, batch.points, first, "ego", config, ego_workers, history)
        history.batches.append(record)
        n_ego += q
        k += 1
        if config.on_batch:
            config.on_batch(history, new, record)
    return history


def best_so_far(history: RunHistory) -> list[tuple[int, float]]:
    """Stepwise minimum of internal responses over successful observations."""
    if not history.observations:
        raise DomainError("best_so_far needs a non-empty history")
    trace, best = [], math.inf
    for o in history.observations:
        if o.status != "ok":
            continue
        best = min(best, o.internal)
        trace.append((o.eval_id, best))
    return trace


def phase_summary(history: RunHistory) -> dict:
    """Best responses per phase and the relative gain of EGO over initialization.

    All values are in the user's direction. ``improvement_fraction`` is the
    gain of the overall best over the initial best relative to ``|init_best|``;
    it is 0 when EGO found nothing better.
    """
    init = [o for o in history.observations if o.phase == "init" and o.status == "ok"]
    ego = [o for o in history.observations if o.phase == "ego" and o.status == "ok"]
    if not init or not ego:
        raise DomainError("phase_summary needs successful observations in both phases")
    return summarize_phases(
        [o.response for o in init], [o.response for o in ego], history.direction
    )


def summarize_phases(init_responses, ego_responses, direction="minimize") -> dict:
    pick = max if direction == "maximize" else min
    init_best, ego_best = pick(init_responses), pick(ego_responses)
    overall = pick(init_best, ego_best)
    gain = overall - init_best if direction == "maximize" else init_best - overall
    if gain == 0:
        frac = 0.0
    elif init_best == 0:
        frac = math.inf
    else:
        frac = gain / abs(init_best)
    return {"init_best": init_best, "ego_best": ego_best, "overall_best": overall,
            "improvement_fraction": frac}

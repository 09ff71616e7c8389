"""Expected improvement, Monte Carlo batch EI and batch proposal."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from egohpo.doe import lhs_sample
from egohpo.errors import DomainError
from egohpo.gp import GpModel
from egohpo.numerics import TOL, jittered_cholesky, norm_cdf, norm_pdf


@dataclass(frozen=True)
class AcquisitionContext:
    f_min: float
    mc_samples: int = 4096
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.f_min):
            raise DomainError("f_min must be finite")
        if self.mc_samples < 1:
            raise DomainError("mc_samples must be >= 1")


@dataclass(frozen=True)
class SearchBudget:
    multistarts: int = 64
    local_steps: int = 100


@dataclass(frozen=True)
class ProposalBatch:
    """``scores`` holds each point's EI when it was selected; ``qei`` the joint
    batch value (None when the batch was not rescored)."""

    points: np.ndarray
    scores: np.ndarray
    qei: float | None = None
    degenerate: bool = False

    @property
    def q(self) -> int:
        return self.points.shape[0]


def expected_improvement(mean, sd, f_min):
    """Closed-form EI for minimization.

    ``(f_min - mean) Phi(z) + sd phi(z)`` with ``z = (f_min - mean) / sd``;
    equals ``max(f_min - mean, 0)`` when ``sd == 0``. Works elementwise on
    arrays; scalar inputs give a float.
    """
    scalar = np.ndim(mean) == 0 and np.ndim(sd) == 0
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(sd)) and math.isfinite(f_min)):
        raise DomainError("expected_improvement needs finite inputs")
    if np.any(sd < 0):
        raise DomainError("sd must be non-negative")
    gap = f_min - mean
    pos = sd > 0
    safe_sd = np.where(pos, sd, 1.0)
    with np.errstate(over="ignore"):
        z = gap / safe_sd
    ei = np.where(pos, gap * norm_cdf(np.atleast_1d(z)).reshape(z.shape)
                  + safe_sd * norm_pdf(np.atleast_1d(z)).reshape(z.shape),
                  np.maximum(gap, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if scalar else ei


def _ei_at(model: GpModel, X, f_min):
    mu, var = model.predict(X)
    return expected_improvement(mu, np.sqrt(var), f_min)


def _canonical_order(Xq):
    return np.lexsort(Xq.T[::-1])


def _psd_factor(cov):
    """Cholesky factor of a posterior covariance for sampling.

    The jitter is relative to the largest variance, so duplicate rows stay
    almost perfectly correlated even when the variance itself is tiny.
    """
    cov = 0.5 * (cov + cov.T)
    level = float(np.max(np.diag(cov)))
    if level <= 0.0:
        return np.zeros_like(cov)
    eye = np.eye(cov.shape[0])
    L, _ = jittered_cholesky(cov + TOL["jitter_start"] * level * eye, jitter_scale=level, check=False)
    return L


def qei_estimate(model: GpModel, Xq, ctx: AcquisitionContext) -> tuple[float, float]:
    """Monte Carlo qEI and its standard error.

    Rows are put into lexicographic order before sampling so the estimate does
    not depend on how the batch is ordered.
    """
    if ctx.mc_samples < 1000:
        raise DomainError("qEI needs mc_samples >= 1000")
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[0] < 1:
        raise DomainError("qEI needs at least one point")
    Xq = Xq[_canonical_order(Xq)]
    post = model.posterior(Xq)
    factor = _psd_factor(post.cov / model.scale**2)
    rng = np.random.default_rng(ctx.seed)
    Z = rng.standard_normal((ctx.mc_samples, Xq.shape[0]))
    Y = post.mean + model.scale * (Z @ factor.T)
    imp = np.maximum(ctx.f_min - Y.min(axis=1), 0.0)
    return float(imp.mean()), float(imp.std(ddof=1) / math.sqrt(imp.size))


def q_expected_improvement(model: GpModel, Xq, ctx: AcquisitionContext) -> float:
    """Expected best improvement over ``f_min`` across the rows of ``Xq``."""
    return qei_estimate(model, Xq, ctx)[0]


_MIN_STEP = 1e-5


def maximize_ei(model: GpModel, f_min: float, budget: SearchBudget, seed: int):
    """Multistart compass search for the EI maximizer in the unit cube.

    All starts advance together: each step probes ``x +/- h e_j`` for every
    coordinate, moves to the best probe if it improves EI, otherwise halves
    ``h``. Returns the final points and their EI, best first.
    """
    d = model.d
    x = lhs_sample(d, budget.multistarts, seed).points.copy()
    fx = _ei_at(model, x, f_min)
    h = np.full(x.shape[0], 0.1)
    eye = np.eye(d)
    dirs = np.vstack([eye, -eye])
    for _ in range(budget.local_steps):
        active = np.flatnonzero(h > _MIN_STEP)
        if active.size == 0:
            break
        probes = np.clip(x[active, None, :] + h[active, None, None] * dirs[None], 0.0, 1.0)
        vals = _ei_at(model, probes.reshape(-1, d), f_min).reshape(active.size, 2 * d)
        j = np.argmax(vals, axis=1)
        best = vals[np.arange(active.size), j]
        better = best > fx[active]
        mv = active[better]
        x[mv] = probes[better, j[better]]
        fx[mv] = best[better]
        h[active[~better]] *= 0.5
    order = np.argsort(-fx, kind="stable")
    return x[order], fx[order]


def _spread_point(taken, d, seed):
    cand = lhs_sample(d, 256, seed).points
    dist = np.min(np.linalg.norm(cand[:, None, :] - taken[None], axis=2), axis=1)
    return cand[int(np.argmax(dist))]


def propose_batch(model: GpModel, d: int, q: int, ctx: AcquisitionContext,
                  search_budget: SearchBudget | None = None, kind: str = "qei") -> ProposalBatch:
    """Greedy constant-liar batch of ``q`` points.

    Each pick maximizes EI, then a pseudo-observation ``y = f_min`` is added at
    the pick (kernel parameters frozen) before the next search. With
    ``kind="qei"`` the finished batch is rescored by Monte Carlo qEI.
    """
    if q < 1:
        raise DomainError("q must be >= 1")
    if d != model.d:
        raise DomainError(f"model dimension {model.d} != {d}")
    if kind not in ("ei", "qei"):
        raise DomainError(f"unknown acquisition kind {kind!r}")
    budget = search_budget or SearchBudget()
    ss = np.random.SeedSequence(ctx.seed)
    seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(q)]

    liar = model
    points, scores = [], []
    degenerate = False
    for i in range(q):
        cands, vals = maximize_ei(liar, ctx.f_min, budget, seeds[i])
        chosen = None
        for x, v in zip(cands, vals):
            if v <= 0.0:
                break
            if all(np.linalg.norm(x - p) >= TOL["dedup"] for p in points):
                chosen, score = x, float(v)
                break
        if chosen is None:
            degenerate = True
            taken = np.vstack([liar.X] + [np.atleast_2d(p) for p in points])
            chosen = _spread_point(taken, d, seeds[i])
            score = float(_ei_at(liar, chosen[None], ctx.f_min)[0])
        points.append(chosen)
        scores.append(score)
        if i + 1 < q:
            liar = liar.condition(chosen[None], [ctx.f_min])

    P = np.array(points)
    qei = q_expected_improvement(model, P, ctx) if kind == "qei" else None
    return ProposalBatch(points=P, scores=np.array(scores), qei=qei, degenerate=degenerate)

"""Kriging surrogate with a Gaussian kernel and a nugget.

Responses are standardized to zero mean and unit variance before fitting, so
the kernel carries unit signal variance on the standardized scale. Posterior
quantities are reported back on the caller's scale.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import lapack
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from egohpo.doe import lhs_sample
from egohpo.errors import DomainError, FactorizationError, NumericalError
from egohpo.numerics import TOL, jittered_cholesky, log_det_from_chol, solve_psd, solve_triangular

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class KernelParams:
    """Per-dimension widths ``theta`` and the nugget (noise variance).

    Values are clamped into the admissible boxes on construction.
    """

    theta: np.ndarray
    nugget: float = TOL["nugget_min"]

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float)).copy()
        if theta.ndim != 1 or not np.all(np.isfinite(theta)):
            raise DomainError("theta must be a finite vector")
        theta = np.clip(theta, TOL["theta_min"], TOL["theta_max"])
        theta.setflags(write=False)
        nugget = float(np.clip(float(self.nugget), TOL["nugget_min"], TOL["nugget_max"]))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "nugget", nugget)

    def __eq__(self, other):
        return (
            isinstance(other, KernelParams)
            and np.array_equal(self.theta, other.theta)
            and self.nugget == other.nugget
        )

    def to_dict(self) -> dict:
        return {"theta": [float(t) for t in self.theta], "nugget": self.nugget}


def _sq_diffs(A, B):
    return (A[:, None, :] - B[None, :, :]) ** 2


def kernel_matrix(A, B, params: KernelParams) -> np.ndarray:
    """Gaussian correlation ``exp(-sum_j theta_j (a_j - b_j)^2)`` between rows."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1] or A.shape[1] != params.theta.size:
        raise DomainError(
            f"dimension mismatch: A has {A.shape[1]}, B has {B.shape[1]}, "
            f"theta has {params.theta.size}"
        )
    w = np.sqrt(params.theta)
    return np.exp(-cdist(A * w, B * w, "sqeuclidean"))


def _nlml_from_gram(K, r, nugget):
    n = r.size
    L, jitter = jittered_cholesky(K + nugget * np.eye(n), check=False)
    a = solve_triangular(L, r)
    return 0.5 * log_det_from_chol(L) + 0.5 * float(a @ a) + 0.5 * n * _LOG_2PI, L, jitter


def nlml(X, y, mean, params: KernelParams) -> float:
    """Negative log marginal likelihood of ``y`` under the GP prior.

    ``0.5 log|K + s I| + 0.5 (y - mean)^T (K + s I)^{-1} (y - mean) + 0.5 n log 2 pi``
    with ``s`` the nugget, evaluated through a Cholesky factor.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise DomainError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    K = kernel_matrix(X, X, params)
    return _nlml_from_gram(K, y - mean, params.nugget)[0]


@dataclass(frozen=True)
class GpConfig:
    restarts: int = 5
    theta_bounds: tuple[float, float] = (1e-3, 1e3)
    nugget_bounds: tuple[float, float] = (1e-8, 1.0)
    seed: int = 0
    # simplex evaluation cap per start; None means 150 * (d + 1)
    max_evals: int | None = None

    def __post_init__(self):
        if self.restarts < 1:
            raise DomainError("restarts must be >= 1")
        tl, th = self.theta_bounds
        nl, nh = self.nugget_bounds
        if not (TOL["theta_min"] <= tl <= th <= TOL["theta_max"]):
            raise DomainError(f"theta_bounds {self.theta_bounds} outside [1e-6, 1e6]")
        if not (TOL["nugget_min"] <= nl <= nh <= TOL["nugget_max"]):
            raise DomainError(f"nugget_bounds {self.nugget_bounds} outside [1e-10, 1e2]")


@dataclass(frozen=True)
class Posterior:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


@dataclass(frozen=True, eq=False)
class GpModel:
    """A conditioned GP.

    ``alpha`` solves ``(K + nugget I) alpha = (y - mean) / scale``; ``scale`` is
    the standard deviation used to standardize ``y`` (1 for constant data).
    ``nlml_value`` is the objective on the standardized responses.
    """

    X: np.ndarray
    y: np.ndarray
    mean: float
    scale: float
    kernel: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    nlml_value: float
    jitter: float = 0.0
    start_nlmls: tuple = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def standardize(self, y):
        return (np.asarray(y, dtype=float) - self.mean) / self.scale

    def _cross(self, Xq):
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        if Xq.shape[1] != self.d:
            raise DomainError(f"query has dimension {Xq.shape[1]}, model has {self.d}")
        return Xq, kernel_matrix(Xq, self.X, self.kernel)

    def predict(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and marginal variance at each query row."""
        Xq, Kq = self._cross(Xq)
        mu = self.mean + self.scale * (Kq @ self.alpha)
        V = solve_triangular(self.chol, Kq.T)
        var = np.maximum(1.0 - np.sum(V * V, axis=0), 0.0) * self.scale**2
        return mu, var

    def posterior(self, Xq) -> Posterior:
        Xq, Kq = self._cross(Xq)
        mu = self.mean + self.scale * (Kq @ self.alpha)
        V = solve_triangular(self.chol, Kq.T)
        cov = kernel_matrix(Xq, Xq, self.kernel) - V.T @ V
        cov = 0.5 * (cov + cov.T) * self.scale**2
        idx = np.diag_indices_from(cov)
        cov[idx] = np.maximum(cov[idx], 0.0)
        return Posterior(mean=mu, cov=cov)

    def condition(self, X_new, y_new) -> "GpModel":
        """Append observations keeping kernel, mean and scale frozen."""
        X = np.vstack([self.X, np.atleast_2d(X_new)])
        y = np.concatenate([self.y, np.atleast_1d(np.asarray(y_new, dtype=float))])
        return _build(X, y, self.mean, self.scale, self.kernel)

    def loo_predictions(self) -> np.ndarray:
        """Leave-one-out posterior means with hyperparameters, mean and scale frozen."""
        n = self.n
        Kinv = solve_psd(self.chol, np.eye(n))
        r = self.standardize(self.y)
        loo_std = r - self.alpha / np.diag(Kinv)
        return self.mean + self.scale * loo_std

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.X, self.y, self.kernel.theta, np.array([self.kernel.nugget, self.mean, self.scale])):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        return h.hexdigest()[:16]


def _build(X, y, mean, scale, kernel: KernelParams, start_nlmls=()) -> GpModel:
    r = (y - mean) / scale
    K = kernel_matrix(X, X, kernel)
    value, L, jitter = _nlml_from_gram(K, r, kernel.nugget)
    alpha = solve_psd(L, r)
    return GpModel(
        X=X, y=y, mean=mean, scale=scale, kernel=kernel, chol=L, alpha=alpha,
        nlml_value=value, jitter=jitter, start_nlmls=start_nlmls,
    )


def _standardization(y):
    sd = float(np.std(y))
    return float(np.mean(y)), (sd if sd > 0 else 1.0)


def build_model(X, y, kernel: KernelParams, mean: float | None = None,
                scale: float | None = None) -> GpModel:
    """Condition a GP on ``(X, y)`` with fixed kernel parameters (no fitting)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise DomainError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    m, s = _standardization(y)
    return _build(X, y, m if mean is None else float(mean), s if scale is None else float(scale), kernel)


def fit(X, y, config: GpConfig | None = None, starts: Sequence[KernelParams] = ()) -> GpModel:
    """Fit kernel widths and nugget by minimizing the NLML.

    Nelder-Mead runs over ``(log theta, log nugget)`` from ``config.restarts``
    Latin-hypercube starts in the log box plus any explicit ``starts``. The
    returned model is never worse than any start point.
    """
    config = config or GpConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n < 2:
        raise DomainError("fit needs at least 2 observations")
    if y.size != n:
        raise DomainError(f"X has {n} rows but y has {y.size} entries")
    if not np.all(np.isfinite(y)):
        raise DomainError("responses must be finite")
    if not np.all(np.isfinite(X)):
        raise DomainError("design must be finite")

    mean, scale = _standardization(y)
    r = (y - mean) / scale
    D = np.ascontiguousarray(_sq_diffs(X, X).transpose(2, 0, 1)).reshape(d, n * n)

    lo = np.log(np.r_[np.full(d, config.theta_bounds[0]), config.nugget_bounds[0]])
    hi = np.log(np.r_[np.full(d, config.theta_bounds[1]), config.nugget_bounds[1]])
    diag = np.diag_indices(n)
    half_n_log_2pi = 0.5 * n * _LOG_2PI

    def objective(z):
        z = np.clip(z, lo, hi)
        K = np.exp(-(np.exp(z[:d]) @ D)).reshape(n, n)
        K[diag] += math.exp(z[d])
        L, info = lapack.dpotrf(K, lower=1, clean=1, overwrite_a=1)
        if info != 0:
            try:
                K = np.exp(-(np.exp(z[:d]) @ D)).reshape(n, n)
                L, _ = jittered_cholesky(K + math.exp(z[d]) * np.eye(n), check=False)
            except FactorizationError:
                return np.inf
        a, _ = lapack.dtrtrs(L, r, lower=1)
        return float(np.sum(np.log(L[diag]))) + 0.5 * float(a @ a) + half_n_log_2pi

    z0s = list(lo + lhs_sample(d + 1, config.restarts, config.seed).points * (hi - lo))
    for kp in starts:
        z0s.append(np.clip(np.log(np.r_[kp.theta, kp.nugget]), lo, hi))

    max_evals = config.max_evals or 150 * (d + 1)
    best_z, best_f = None, np.inf
    tried = []
    for z0 in z0s:
        f0 = objective(z0)
        tried.append((f0, z0))
        res = minimize(
            objective, z0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
            options={"maxfev": max_evals, "xatol": 1e-3, "fatol": 1e-5},
        )
        cand = [(res.fun, np.clip(res.x, lo, hi)), (f0, z0)]
        for f, z in cand:
            if f < best_f:
                best_f, best_z = f, z
    if best_z is None or not np.isfinite(best_f):
        raise NumericalError("NLML could not be evaluated at any start point")

    kernel = KernelParams(theta=np.exp(best_z[:d]), nugget=math.exp(best_z[d]))
    model = _build(X, y, mean, scale, kernel, start_nlmls=tuple(f for f, _ in tried))
    return model


def posterior(model: GpModel, Xq) -> Posterior:
    return model.posterior(Xq)


def loo_r_squared(model: GpModel) -> float:
    """Leave-one-out cross-validated coefficient of determination."""
    if model.n < 3:
        raise DomainError("loo_r_squared needs at least 3 observations")
    y = model.y
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DomainError("R^2 is undefined for constant responses")
    pred = model.loo_predictions()
    return 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot

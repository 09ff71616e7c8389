"""Linear-model sensitivity analysis: sequential (Type I) ANOVA."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from egohpo.errors import DomainError, SingularDesignError
from egohpo.numerics import TOL, reg_inc_beta

RESIDUAL = "Residuals"


def _design(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n, k = X.shape
    if y.size != n:
        raise DomainError(f"X has {n} rows but y has {y.size} entries")
    if n <= k + 1:
        raise DomainError(f"need more than k + 1 = {k + 1} observations, got {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DomainError("X and y must be finite")
    return np.column_stack([np.ones(n), X]), y


def _qr_checked(A, names):
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    norms = np.linalg.norm(A, axis=0)
    bad = [j for j in range(A.shape[1]) if diag[j] <= TOL["rank"] * max(norms[j], 1.0)]
    if bad:
        labels = [names[j] for j in bad]
        raise SingularDesignError(
            "design is rank deficient; dependent columns: " + ", ".join(labels), labels
        )
    return Q, R


def _names(k, factor_names):
    names = list(factor_names) if factor_names is not None else [f"x{j + 1}" for j in range(k)]
    if len(names) != k:
        raise DomainError(f"{len(names)} factor names for {k} columns")
    return ["(Intercept)"] + names


def fit_linear(X, y, factor_names: Sequence[str] | None = None) -> np.ndarray:
    """Least-squares coefficients, intercept first, via a QR decomposition."""
    A, y = _design(X, y)
    Q, R = _qr_checked(A, _names(A.shape[1] - 1, factor_names))
    return solve_triangular(R, Q.T @ y)


def f_sf(f: float, df1: int, df2: int) -> float:
    """Upper tail probability of the F(df1, df2) distribution."""
    if df1 < 1 or df2 < 1:
        raise DomainError("degrees of freedom must be >= 1")
    if math.isnan(f) or f < 0:
        raise DomainError(f"F statistic must be >= 0, got {f}")
    if f == 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return reg_inc_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


@dataclass(frozen=True)
class AnovaRow:
    factor: str
    df: int
    ss: float
    ms: float
    f_value: float | None = None
    p_value: float | None = None


@dataclass(frozen=True)
class AnovaTable:
    rows: list[AnovaRow]
    residual: AnovaRow
    total_ss: float
    exact_fit: bool = False
    coefficients: np.ndarray = field(default=None, repr=False)

    def __iter__(self):
        return iter(self.rows + [self.residual])

    def row(self, factor: str) -> AnovaRow:
        for r in self:
            if r.factor == factor:
                return r
        raise KeyError(factor)

    def as_records(self) -> list[dict]:
        return [
            {"factor": r.factor, "df": r.df, "ss": r.ss, "ms": r.ms,
             "f_value": r.f_value, "p_value": r.p_value}
            for r in self
        ]

    def to_text(self) -> str:
        """R-style aligned table."""
        head = ["", "Df", "Sum Sq", "Mean Sq", "F value", "Pr(>F)"]
        body = []
        for r in self:
            body.append([
                r.factor, str(r.df), f"{r.ss:.2f}", f"{r.ms:.2f}",
                "" if r.f_value is None else f"{r.f_value:.2f}",
                "" if r.p_value is None else f"{r.p_value:.4f}",
            ])
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
        fmt = lambda row: "  ".join(
            (c.ljust(w) if i == 0 else c.rjust(w)) for i, (c, w) in enumerate(zip(row, widths))
        ).rstrip()
        return "\n".join(fmt(r) for r in [head] + body) + "\n"


def anova_sequential(X, y, factor_names: Sequence[str] | None = None) -> AnovaTable:
    """Type I ANOVA with one degree of freedom per scalar factor.

    Factors enter in column order; each factor's SS is the drop in residual
    sum of squares when it is added to the preceding ones. When the residual
    vanishes the table is flagged ``exact_fit`` and factors with positive SS
    get ``F = inf``, ``p = 0``.
    """
    A, y = _design(X, y)
    n, p = A.shape
    k = p - 1
    names = _names(k, factor_names)
    Q, R = _qr_checked(A, names)
    effects = Q.T @ y
    resid = y - Q @ effects
    rss = float(resid @ resid)
    total = float(np.sum((y - y.mean()) ** 2))
    ss = effects[1:] ** 2
    df_res = n - p

    flat = total <= (1e-15 * max(1.0, float(np.max(np.abs(y))))) ** 2 * n
    if flat:
        ss = np.zeros(k)
        rss = total = 0.0
    exact = flat or rss <= TOL["exact_fit"] * total
    if exact:
        rss = 0.0
    ms_res = rss / df_res

    rows = []
    for name, s in zip(names[1:], ss):
        s = float(s)
        if exact:
            fv, pv = (math.inf, 0.0) if s > 0 else (0.0, 1.0)
        else:
            fv = s / ms_res
            pv = f_sf(fv, 1, df_res)
        rows.append(AnovaRow(name, 1, s, s, fv, pv))
    residual = AnovaRow(RESIDUAL, df_res, rss, ms_res)
    coef = solve_triangular(R, effects)
    return AnovaTable(rows=rows, residual=residual, total_ss=total, exact_fit=exact, coefficients=coef)


def ss_percentages(table: AnovaTable) -> dict[str, float]:
    """Each factor's (and the residual's) share of the total sum of squares, in percent."""
    total = sum(r.ss for r in table)
    if total <= 0:
        raise DomainError("total sum of squares is zero; percentages are undefined")
    return {r.factor: 100.0 * r.ss / total for r in table}


def r_squared(X, y) -> float:
    t = anova_sequential(X, y)
    if t.total_ss == 0:
        raise DomainError("R^2 is undefined for constant responses")
    return 1.0 - t.residual.ss / t.total_ss


def ablation(X, y, factor_names: Sequence[str] | None = None) -> dict[str, float]:
    """Drop each factor in turn and report the loss in R^2 against the full model."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = _names(X.shape[1], factor_names)[1:]
    full = r_squared(X, y)
    out = {}
    for j, name in enumerate(names):
        rest = np.delete(X, j, axis=1)
        if rest.shape[1] == 0:
            y_ = np.asarray(y, dtype=float)
            reduced = 0.0 if np.var(y_) > 0 else 1.0
        else:
            reduced = r_squared(rest, y)
        out[name] = full - reduced
    return out

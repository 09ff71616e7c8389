"""Latin hypercube designs on the unit cube."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from egohpo.errors import DomainError
from egohpo.search_space import SearchSpace


@dataclass(frozen=True)
class DesignMatrix:
    points: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def lhs_sample(d: int, n: int, seed: int = 0) -> DesignMatrix:
    """Draw a random Latin hypercube of ``n`` points in ``[0, 1)^d``.

    Every column is an independent random permutation of the ``n`` strata
    ``[k/n, (k+1)/n)`` with a uniform position inside each stratum.
    """
    if int(d) < 1 or int(n) < 1:
        raise DomainError(f"lhs_sample needs n >= 1 and d >= 1, got n={n}, d={d}")
    n, d = int(n), int(d)
    rng = np.random.default_rng(seed)
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    jitter = rng.random((n, d))
    points = (strata + jitter) / n
    # float rounding can push a point onto the next stratum's left edge
    upper = (strata + 1) / n
    for _ in range(8):
        over = (points >= upper) | (np.floor(points * n) > strata)
        if not over.any():
            break
        points[over] = np.nextafter(points[over], -np.inf)
    return DesignMatrix(points=points, seed=seed)


def design_to_raw(space: SearchSpace, design: DesignMatrix) -> list[np.ndarray]:
    """Map every design row through :meth:`SearchSpace.from_unit`."""
    pts = design.points if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != space.dim:
        raise DomainError(f"design has dimension {pts.shape[-1]}, space has {space.dim}")
    return [space.from_unit(row) for row in pts]

"""Dense linear algebra and special functions.

All numerical tolerances used across the package live in :data:`TOL` so the
numerical policy can be audited in one place.
"""

import math

import numpy as np
from scipy.linalg import lapack
from scipy.linalg import solve_triangular as _solve_triangular
from scipy.special import betainc, ndtr

from egohpo.errors import DomainError, FactorizationError

TOL = {
    # symmetry check on construction of a SymmetricMatrix
    "symmetry": 1e-12,
    # jitter escalation for Cholesky rescue: start, growth factor, ceiling
    "jitter_start": 1e-10,
    "jitter_growth": 10.0,
    "jitter_max": 1e-6,
    # kernel hyperparameter boxes
    "theta_min": 1e-6,
    "theta_max": 1e6,
    "nugget_min": 1e-10,
    "nugget_max": 1e2,
    # posterior covariance clamping
    "cov_clamp": 1e-10,
    # deduplication distance for batch proposals (unit cube)
    "dedup": 1e-9,
    # relative residual below which a regression is an exact fit
    "exact_fit": 1e-20,
    # relative |R_kk| below which a design column is dependent
    "rank": 1e-10,
}

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def as_symmetric(A):
    """Return ``A`` as a float array after checking it is square and symmetric."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > TOL["symmetry"] * scale:
        raise DomainError("matrix is not symmetric")
    return A


def cholesky(A):
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    FactorizationError
        If ``A`` is not positive definite. ``pivot`` holds the order of the
        first leading minor that is not positive.
    """
    A = as_symmetric(A)
    if A.shape[0] == 0:
        return A.copy()
    L, info = _potrf(A)
    if info > 0:
        raise FactorizationError(
            f"matrix is not positive definite (leading minor {info})", pivot=int(info)
        )
    if info < 0:
        raise DomainError(f"invalid argument {-info} to dpotrf")
    return L


def _potrf(A):
    L, info = lapack.dpotrf(A, lower=1, clean=1, overwrite_a=0)
    return L, int(info)


def jittered_cholesky(A, jitter_scale=1.0, check=True):
    """Cholesky with bounded jitter escalation.

    Tries ``A`` as is, then ``A + j*jitter_scale*I`` for ``j`` growing by
    ``jitter_growth`` from ``jitter_start`` up to ``jitter_max``.

    Returns
    -------
    (L, jitter)
        The factor and the jitter that was added (0.0 when none was needed).

    ``check=False`` skips the symmetry check; for hot loops on matrices that
    are symmetric by construction.
    """
    if check:
        A = as_symmetric(A)
    L, info = _potrf(A)
    if info == 0:
        return L, 0.0
    eye = np.eye(A.shape[0])
    j = TOL["jitter_start"]
    while j <= TOL["jitter_max"] * (1 + 1e-9):
        L, info = _potrf(A + j * jitter_scale * eye)
        if info == 0:
            return L, j * jitter_scale
        j *= TOL["jitter_growth"]
    raise FactorizationError(
        f"Cholesky failed after jitter escalation to {TOL['jitter_max']:g} "
        f"(leading minor {info})",
        pivot=info,
    )


def solve_triangular(L, b, lower=True, trans=False):
    """Solve ``L x = b`` (or ``L^T x = b`` with ``trans``) for triangular ``L``."""
    return _solve_triangular(L, b, lower=lower, trans=1 if trans else 0, check_finite=False)


def solve_psd(L, b):
    """Solve ``A x = b`` given the lower Cholesky factor ``L`` of ``A``."""
    return solve_triangular(L, solve_triangular(L, b), trans=True)


def log_det_from_chol(L):
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def erf(x):
    return math.erf(x)


def norm_cdf(x):
    """Standard normal CDF; accepts scalars or arrays."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / math.sqrt(2.0))
    return ndtr(np.asarray(x, dtype=float))


def norm_pdf(x):
    """Standard normal density; accepts scalars or arrays."""
    if np.ndim(x) == 0:
        return _INV_SQRT_2PI * math.exp(-0.5 * float(x) ** 2)
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def reg_inc_beta(a, b, x):
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise DomainError(f"reg_inc_beta needs a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"reg_inc_beta needs 0 <= x <= 1, got x={x}")
    return float(betainc(a, b, x))

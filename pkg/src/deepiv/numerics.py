"""Dense linear algebra, distribution quantiles and reproducible RNG streams."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import linalg, special, stats

from .errors import DomainError, ShapeMismatch, SingularMatrix

PIVOT_RTOL = 1e-12


def solve_linear(a, b):
    """Solve ``a @ x = b`` by LU factorisation with partial pivoting.

    Parameters
    ----------
    a : array_like, shape (q, q)
    b : array_like, shape (q,) or (q, m)

    Raises
    ------
    SingularMatrix
        If any pivot is smaller than ``1e-12 * max|a|``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ShapeMismatch(f"row mismatch: a has {a.shape[0]}, b has {b.shape[0]}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("non-finite entries in linear system")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrix
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(a, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < PIVOT_RTOL * scale:
        raise SingularMatrix("pivot below 1e-12 relative to max |entry|")
    return linalg.lu_solve((lu, piv), b, check_finite=False)


def inverse(a):
    """Matrix inverse through :func:`solve_linear`."""
    a = np.asarray(a, dtype=np.float64)
    return solve_linear(a, np.eye(a.shape[0]))


def normal_cdf(x):
    return special.ndtr(x)


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF.

    Starts from ``ndtri`` and applies one Newton step on ``Phi(z) - p``,
    which keeps the absolute error far below 1e-8 on (0, 1).
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    z = float(special.ndtri(p))
    pdf = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    if pdf > 0.0:
        z -= (float(special.ndtr(z)) - p) / pdf
    return z


def chi2_quantile(dof: int, p: float) -> float:
    """Upper-``p`` quantile of the chi-square distribution: ``P(X > c) = p``."""
    if int(dof) != dof or dof < 1:
        raise DomainError(f"dof must be a positive integer, got {dof}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    return float(stats.chi2.isf(p, int(dof)))


def chi2_sf(x: float, dof: int) -> float:
    """Upper tail probability of the chi-square distribution."""
    if x <= 0.0:
        return 1.0
    return float(stats.chi2.sf(x, dof))


_MASK64 = 0xFFFFFFFFFFFFFFFF


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by Philox, so streams with distinct ids are independent and any
    single stream is reproducible regardless of how work is scheduled.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(int(k) for k in _path)
        words = [self.seed & _MASK64, self.stream_id & _MASK64, *self._path]
        self.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))

    def __repr__(self):
        path = f", path={self._path}" if self._path else ""
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}{path})"

    def spawn(self, k: int) -> "RngStream":
        """Child stream ``k``; deterministic in ``(seed, stream_id, k)`` and
        never equal to a top-level stream."""
        return RngStream(self.seed, self.stream_id, (*self._path, len(self._path) + 1, int(k)))

    def child_seed(self) -> int:
        return int(self.generator.integers(0, 2**63 - 1))

    # thin delegation to the underlying generator
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)


def as_rng(rng) -> RngStream:
    """Coerce an int seed or ``RngStream`` to ``RngStream``."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))

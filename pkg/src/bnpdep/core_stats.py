"""Numerical kernel: Gaussian densities, factorizations, inverse-Wishart
draws, rank transforms and the seeding discipline.

Every stochastic routine in the package takes an :class:`RngStream`.  A
stream is identified by a master seed and an integer path (replicate,
permutation, chain ...), so any task can be replayed in isolation and the
results never depend on how tasks are scheduled across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, special, stats

from .errors import (ContractViolation, DataError, DegenerateColumn,
                     InvalidDegreesOfFreedom, NotSpd)

LOG_2PI = math.log(2.0 * math.pi)
_SYM_RTOL = 1e-10


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream addressed by ``(master_seed, path)``.

    Seeds are derived with :class:`numpy.random.SeedSequence`, using the path
    as the spawn key, so streams with different paths are independent and a
    stream can be rebuilt anywhere from its address alone.
    """

    master_seed: int
    path: tuple[int, ...] = ()
    _gen: list = field(default_factory=list, init=False, repr=False,
                       compare=False)

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ContractViolation("master_seed must be a 64-bit unsigned int")
        if any(int(p) < 0 for p in self.path):
            raise ContractViolation("path entries must be non-negative")
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def child(self, *index: int) -> "RngStream":
        return RngStream(self.master_seed, self.path + tuple(index))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(int(self.master_seed),
                                      spawn_key=self.path)

    @property
    def generator(self) -> np.random.Generator:
        """Lazily created generator; successive calls share its state."""
        if not self._gen:
            self._gen.append(np.random.Generator(
                np.random.PCG64(self.seed_sequence())))
        return self._gen[0]

    def fresh_generator(self) -> np.random.Generator:
        """A new generator positioned at the start of this stream."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def kernel_seed(self) -> int:
        """32-bit seed for compiled kernels, fixed by the stream address."""
        return int(self.seed_sequence().generate_state(1, np.uint32)[0])

    def next_kernel_seed(self) -> int:
        """32-bit seed drawn from the running generator (advances it)."""
        return int(self.generator.integers(0, 2 ** 32, dtype=np.uint64))


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise ContractViolation(f"expected RngStream or int seed, got {type(rng)!r}")


# ---------------------------------------------------------------------------
# SPD matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CholFactor:
    """Lower Cholesky factor ``lower @ lower.T`` of an SPD matrix."""

    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def matrix(self) -> np.ndarray:
        return self.lower @ self.lower.T

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def check_spd(m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {m.shape}")
    scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T)) > _SYM_RTOL * scale:
        raise NotSpd("matrix is not symmetric")
    return m


def cholesky(m) -> CholFactor:
    """Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    NotSpd
        If ``m`` is not symmetric or not positive definite.
    """
    m = check_spd(m)
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotSpd("matrix is not positive definite") from exc
    if not np.all(np.isfinite(lower)) or np.any(np.diag(lower) <= 0):
        raise NotSpd("matrix is not positive definite")
    return CholFactor(lower)


def mvn_logpdf(x, mean, cov: CholFactor) -> float:
    """Log density of ``N(mean, cov.lower @ cov.lower.T)`` at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if x.shape != mean.shape or x.shape[0] != cov.dim:
        raise ContractViolation(
            f"dimension mismatch: x{x.shape}, mean{mean.shape}, cov {cov.dim}")
    z = linalg.solve_triangular(cov.lower, x - mean, lower=True)
    return -0.5 * (cov.dim * LOG_2PI + cov.logdet() + float(z @ z))


def inv_wishart_sample(df: float, scale, rng: RngStream) -> np.ndarray:
    """One draw from the inverse Wishart ``IW(df, scale)``.

    Uses the Bartlett decomposition of the Wishart draw of the inverse, so
    only chi-square and standard normal variates are needed.  The density is
    proportional to ``|S|^{-(df+p+1)/2} exp(-tr(scale S^{-1})/2)``, with mean
    ``scale / (df - p - 1)``.
    """
    scale = check_spd(scale)
    p = scale.shape[0]
    if not df > p - 1:
        raise InvalidDegreesOfFreedom(f"df={df} must exceed dim-1={p - 1}")
    gen = as_stream(rng).generator
    # W = L A A^T L^T ~ Wishart(df, scale^{-1}), L = chol(scale^{-1})
    lower = np.linalg.cholesky(np.linalg.inv(scale))
    a = np.zeros((p, p))
    for i in range(p):
        a[i, i] = math.sqrt(gen.chisquare(df - i))
        a[i, :i] = gen.standard_normal(i)
    la = lower @ a
    out = np.linalg.inv(la @ la.T)
    return 0.5 * (out + out.T)


def inv_wishart_logpdf(s, df: float, scale) -> float:
    s = np.atleast_2d(np.asarray(s, dtype=float))
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    p = s.shape[0]
    _, ld_scale = np.linalg.slogdet(scale)
    _, ld_s = np.linalg.slogdet(s)
    tr = float(np.trace(scale @ np.linalg.inv(s)))
    return (0.5 * df * ld_scale - 0.5 * df * p * math.log(2.0)
            - special.multigammaln(0.5 * df, p)
            - 0.5 * (df + p + 1) * ld_s - 0.5 * tr)


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """``n`` observations of two variable groups stored side by side.

    ``values[:, :d1]`` is group 1 and ``values[:, d1:]`` is group 2.
    """

    values: np.ndarray
    d1: int = 1
    d2: int = 1
    standardized: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.d1 + self.d2:
            raise ContractViolation(
                f"values must be n x {self.d1 + self.d2}, got {values.shape}")
        if values.shape[0] < 3 * (self.d1 + self.d2):
            raise DataError(f"need at least {3 * (self.d1 + self.d2)} rows, "
                            f"got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise DataError("dataset contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_columns(cls, x1, x2, standardized: bool = False) -> "Dataset":
        return cls(np.column_stack([np.asarray(x1, float),
                                    np.asarray(x2, float)]),
                   standardized=standardized)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def x1(self) -> np.ndarray:
        return self.values[:, :self.d1].ravel() if self.d1 == 1 \
            else self.values[:, :self.d1]

    @property
    def x2(self) -> np.ndarray:
        return self.values[:, self.d1:].ravel() if self.d2 == 1 \
            else self.values[:, self.d1:]


def normal_score_transform(column: Sequence[float]) -> np.ndarray:
    """Map a column to standard normal scores ``Phi^-1((rank - 0.5) / n)``.

    Ties receive midranks.  The output depends on the input only through its
    rank vector.
    """
    x = np.asarray(column, dtype=float).ravel()
    if x.size < 3:
        raise ContractViolation("normal_score_transform needs at least 3 values")
    if np.all(x == x[0]):
        raise DegenerateColumn("cannot rank a constant column")
    ranks = stats.rankdata(x, method="average")
    return special.ndtri((ranks - 0.5) / x.size)


def standardize(d: Dataset) -> Dataset:
    """Centre each column and scale it to unit variance (``n - 1`` divisor)."""
    v = d.values
    sd = v.std(axis=0, ddof=1)
    if np.any(sd == 0) or np.any(np.ptp(v, axis=0) == 0):
        raise DegenerateColumn("cannot standardize a constant column")
    out = (v - v.mean(axis=0)) / sd
    return Dataset(out, d.d1, d.d2, standardized=True)


def normal_scores(d: Dataset) -> Dataset:
    """Normal-score transform every column, then standardize."""
    cols = [normal_score_transform(d.values[:, k]) for k in range(d.values.shape[1])]
    return standardize(Dataset(np.column_stack(cols), d.d1, d.d2))

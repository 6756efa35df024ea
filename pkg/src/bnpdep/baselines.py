"""Competing independence tests and the shared permutation engine.

Five baselines are provided: the slope t-test of a simple linear
regression (LR), distance covariance (ES), the Heller-Heller-Gorfine
distance test (HHG), the data-derived-partition test with 3x3 tables (DDP)
and the maximal information coefficient (MIC).  All except LR are
calibrated by permuting the rows of the second column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import _baseline_kernels as _k
from .core_stats import RngStream, as_stream
from .errors import ContractViolation, DegenerateColumn, TiesUnsupported

METHODS = ("LR", "ES", "HHG", "DDP", "MIC")


@dataclass(frozen=True)
class TestResult:
    """Outcome of one independence test.

    ``p_value`` is ``None`` for the DPM test, which reports its Bayes factor
    in ``statistic`` and the calibrated threshold in ``threshold``.
    """

    __test__ = False  # not a pytest class

    method: str
    statistic: float
    p_value: Optional[float]
    reject: bool
    n_permutations: Optional[int] = None
    threshold: Optional[float] = None
    posterior_h1: Optional[float] = None


def _pair(x1, x2) -> tuple[np.ndarray, np.ndarray]:
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x1.shape != x2.shape:
        raise ContractViolation(f"length mismatch: {x1.size} vs {x2.size}")
    return x1, x2


def _check_n(n: int, minimum: int, name: str) -> None:
    if n < minimum:
        raise ContractViolation(f"{name} needs n >= {minimum}, got {n}")


# ---------------------------------------------------------------------------
# permutation engine
# ---------------------------------------------------------------------------

def permutations(n: int, n_perm: int, rng) -> np.ndarray:
    """``n_perm x n`` array of permutations; row ``p`` comes from the child
    stream ``p`` of ``rng``, so it does not depend on how work is split."""
    base = as_stream(rng)
    return np.stack([base.child(p).fresh_generator().permutation(n)
                     for p in range(n_perm)]) if n_perm else \
        np.empty((0, n), dtype=np.int64)


def pvalue_from_null(observed: float, null_stats) -> float:
    """``(1 + #{null >= observed}) / (n_perm + 1)``."""
    null_stats = np.asarray(null_stats, dtype=float)
    return (1.0 + float(np.sum(null_stats >= observed))) / (null_stats.size + 1.0)


def permutation_pvalue(statistic: Callable, x1, x2, n_perm: int, rng) -> float:
    """Permutation p-value of ``statistic(x1, x2)``, permuting ``x2`` rows.

    Parameters
    ----------
    statistic : callable
        Maps ``(x1, x2)`` to a real number; larger means more dependent.
    n_perm : int
        Number of permutations, at least 19.
    rng : RngStream or int
    """
    if n_perm < 19:
        raise ContractViolation(f"n_perm must be >= 19, got {n_perm}")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    obs = statistic(x1, x2)
    perms = permutations(x2.shape[0], n_perm, rng)
    null = [statistic(x1, x2[p]) for p in perms]
    return pvalue_from_null(obs, null)


def _result(method, obs, null, alpha, n_perm) -> TestResult:
    p = pvalue_from_null(obs, null)
    return TestResult(method, float(obs), p, bool(p <= alpha), n_perm)


# ---------------------------------------------------------------------------
# LR
# ---------------------------------------------------------------------------

def lr_test(x1, x2, alpha: float = 0.05) -> TestResult:
    """Two-sided t-test of the slope in ``x2 = b0 + b1 x1 + e``.

    The reported statistic is the t statistic ``b1 / se(b1)``.
    """
    x1, x2 = _pair(x1, x2)
    _check_n(x1.size, 3, "lr_test")
    if np.ptp(x1) == 0:
        raise DegenerateColumn("x1 is constant; slope undefined")
    fit = stats.linregress(x1, x2)
    if fit.stderr == 0:
        t = math.copysign(math.inf, fit.slope) if fit.slope else 0.0
        p = 0.0 if fit.slope else 1.0
    else:
        t = fit.slope / fit.stderr
        p = float(fit.pvalue)
    return TestResult("LR", float(t), p, bool(p <= alpha))


# ---------------------------------------------------------------------------
# distance covariance
# ---------------------------------------------------------------------------

def _centered_distances(x: np.ndarray) -> np.ndarray:
    x = x.reshape(len(x), -1)
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    return (d - d.mean(axis=0, keepdims=True) - d.mean(axis=1, keepdims=True)
            + d.mean())


def dcov_statistic(x1, x2) -> float:
    """Empirical squared distance covariance ``V_n^2`` (V-statistic form).

    ``V_n^2 = n^-2 sum_kl A_kl B_kl`` with ``A``, ``B`` the double-centred
    Euclidean distance matrices of the two groups.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    n = x1.shape[0]
    _check_n(n, 2, "dcov_statistic")
    a = _centered_distances(x1)
    b = _centered_distances(x2)
    return max(float((a * b).sum()) / (n * n), 0.0)


def dcov_s2(x1, x2) -> float:
    """Product of the mean pairwise distances of the two groups."""
    out = 1.0
    for x in (np.asarray(x1, float), np.asarray(x2, float)):
        x = x.reshape(len(x), -1)
        d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
        out *= d.mean()
    return out


def dcov_test(x1, x2, alpha: float = 0.05, n_perm: int = 300, rng=0,
              asymptotic: bool = False) -> TestResult:
    """Distance covariance test of ``n V_n^2``.

    By default the p-value comes from ``n_perm`` permutations of ``x2``.
    With ``asymptotic=True`` the decision is ``n V_n^2 / S2 >
    Phi^-1(1 - alpha/2)^2`` and the p-value is the matching chi-square(1)
    tail, which is conservative.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    n = x1.shape[0]
    _check_n(n, 4, "dcov_test")
    a = _centered_distances(x1)
    b = _centered_distances(x2)
    obs = n * max(float((a * b).sum()) / (n * n), 0.0)
    if asymptotic:
        s2 = dcov_s2(x1, x2)
        z = obs / s2 if s2 > 0 else 0.0
        crit = stats.norm.ppf(1.0 - alpha / 2.0) ** 2
        return TestResult("ES", z, float(stats.chi2.sf(z, 1)), bool(z > crit))
    null = np.empty(n_perm)
    for i, p in enumerate(permutations(n, n_perm, rng)):
        null[i] = n * max(float((a * b[np.ix_(p, p)]).sum()) / (n * n), 0.0)
    return _result("ES", obs, null, alpha, n_perm)


# ---------------------------------------------------------------------------
# HHG
# ---------------------------------------------------------------------------

def _distances(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x = x.reshape(len(x), -1)
    return np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))


def hhg_statistic(x1, x2) -> float:
    """Sum over ordered reference pairs of the 2x2 G^2 statistic.

    For each ``(i, i')`` the other ``n - 2`` points are classified by
    ``d(x1_i, x1_k) <= d(x1_i, x1_i')`` and the same on ``x2``.
    """
    d1 = _distances(x1)
    d2 = _distances(x2)
    _check_n(d1.shape[0], 4, "hhg_statistic")
    if d1.shape != d2.shape:
        raise ContractViolation("length mismatch")
    return float(_k.hhg_from_distances(d1, d2))


def hhg_test(x1, x2, alpha: float = 0.05, n_perm: int = 300, rng=0) -> TestResult:
    d1 = _distances(x1)
    d2 = _distances(x2)
    n = d1.shape[0]
    _check_n(n, 4, "hhg_test")
    obs = float(_k.hhg_from_distances(d1, d2))
    null = _k.hhg_permuted(d1, d2, permutations(n, n_perm, rng))
    return _result("HHG", obs, null, alpha, n_perm)


# ---------------------------------------------------------------------------
# DDP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankGrid:
    """Dominance counts ``cumulative[a, b] = #{k : rank1_k < a, rank2_k < b}``
    over the rank-rank scatter (0-based ranks), giving any axis-aligned cell
    count with four lookups."""

    n: int
    cumulative: np.ndarray

    @classmethod
    def from_data(cls, x1, x2) -> "RankGrid":
        r1, r2 = _tie_free_ranks(x1, x2)
        return cls(r1.size, _k.rank_grid(r1, r2))

    def count(self, lo1: int, hi1: int, lo2: int, hi2: int) -> int:
        """Points with ``lo1 <= rank1 < hi1`` and ``lo2 <= rank2 < hi2``."""
        return int(_k._box(self.cumulative, lo1, hi1, lo2, hi2))


def _tie_free_ranks(x1, x2) -> tuple[np.ndarray, np.ndarray]:
    x1, x2 = _pair(x1, x2)
    for name, x in (("x1", x1), ("x2", x2)):
        if np.unique(x).size != x.size:
            raise TiesUnsupported(f"{name} contains tied values")
    r1 = np.empty(x1.size, dtype=np.int64)
    r2 = np.empty(x2.size, dtype=np.int64)
    r1[np.argsort(x1, kind="mergesort")] = np.arange(x1.size)
    r2[np.argsort(x2, kind="mergesort")] = np.arange(x2.size)
    return r1, r2


def ddp_statistic(x1, x2, m: int = 3) -> float:
    """Sum of 3x3 G^2 statistics over all unordered reference pairs.

    Each pair's x1 values and x2 values split the axes into three intervals
    which hold the other ``n - 2`` points.  Only ``m = 3`` is implemented.

    Raises
    ------
    TiesUnsupported
        If either column has tied values.
    """
    if m != 3:
        raise ContractViolation("only m = 3 is implemented")
    r1, r2 = _tie_free_ranks(x1, x2)
    _check_n(r1.size, m + 2, "ddp_statistic")
    return float(_k.ddp3_from_ranks(r1, r2))


def ddp_test(x1, x2, alpha: float = 0.05, n_perm: int = 300, rng=0) -> TestResult:
    r1, r2 = _tie_free_ranks(x1, x2)
    _check_n(r1.size, 5, "ddp_test")
    obs = float(_k.ddp3_from_ranks(r1, r2))
    null = _k.ddp3_permuted(r1, r2, permutations(r1.size, n_perm, rng))
    return _result("DDP", obs, null, alpha, n_perm)


# ---------------------------------------------------------------------------
# MIC
# ---------------------------------------------------------------------------

def mic_budget(n: int) -> float:
    return float(n) ** 0.6


def mic_statistic(x1, x2) -> float:
    """Maximal information coefficient with grid budget ``B = n^0.6``.

    For every grid shape with ``x * y <= B`` one axis is split into
    equal-count bins (the smaller count) and the cut points of the other are
    chosen by an exact dynamic program; both orientations are searched and
    the mutual information (natural log) is divided by ``log(min(x, y))``.
    """
    x1, x2 = _pair(x1, x2)
    _check_n(x1.size, 8, "mic_statistic")
    return float(_k.mic_core(x1, x2, mic_budget(x1.size)))


def mic_test(x1, x2, alpha: float = 0.05, n_perm: int = 300, rng=0) -> TestResult:
    x1, x2 = _pair(x1, x2)
    _check_n(x1.size, 8, "mic_test")
    b = mic_budget(x1.size)
    obs = float(_k.mic_core(x1, x2, b))
    null = _k.mic_permuted(x1, x2, b, permutations(x1.size, n_perm, rng))
    return _result("MIC", obs, null, alpha, n_perm)


# ---------------------------------------------------------------------------

def run_baseline(method: str, x1, x2, alpha: float = 0.05, n_perm: int = 300,
                 rng=0) -> TestResult:
    """Dispatch one of ``LR, ES, HHG, DDP, MIC`` by name."""
    if method == "LR":
        return lr_test(x1, x2, alpha)
    tests = {"ES": dcov_test, "HHG": hhg_test, "DDP": ddp_test, "MIC": mic_test}
    if method not in tests:
        raise ContractViolation(f"unknown method {method!r}; expected {METHODS}")
    return tests[method](x1, x2, alpha, n_perm, rng)

"""Pairwise screening, multiple-testing rules, agreement and power studies."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import baselines
from .baselines import TestResult
from .core_stats import Dataset, as_stream, normal_scores
from .dpm_engine import Hyperparams
from .errors import BnpDepError, ContractViolation, UndefinedKappa
from .parallel import ordered_map
from .rjmcmc import (CalibratedTest, ChainConfig, _run, dpm_test,
                     estimate_evidence, null_calibration)
from .simgen import SCENARIOS, generate

ALL_METHODS = baselines.METHODS + ("DPM",)


# ---------------------------------------------------------------------------
# multiple testing
# ---------------------------------------------------------------------------

def bh_select(p_values: Sequence[float], q: float) -> frozenset[int]:
    """Benjamini-Hochberg step-up rule; returns the rejected indices."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return frozenset()
    if np.any((p <= 0) | (p > 1)):
        raise ContractViolation("p-values must lie in (0, 1]")
    order = np.argsort(p, kind="mergesort")
    m = p.size
    ok = p[order] <= q * np.arange(1, m + 1) / m
    if not ok.any():
        return frozenset()
    k = int(np.nonzero(ok)[0].max()) + 1
    return frozenset(int(i) for i in order[:k])


def bfdr_select(posterior_h0: Sequence[float], q: float) -> frozenset[int]:
    """Reject the longest prefix of ascending ``P(H0 | X)`` whose running
    mean (the estimated Bayesian FDR) is at most ``q``."""
    p = np.asarray(posterior_h0, dtype=float)
    if p.size == 0:
        return frozenset()
    if np.any((p < 0) | (p > 1)):
        raise ContractViolation("posterior probabilities must lie in [0, 1]")
    order = np.argsort(p, kind="mergesort")
    means = np.cumsum(p[order]) / np.arange(1, p.size + 1)
    ok = means <= q
    if not ok.any():
        return frozenset()
    k = int(np.nonzero(ok)[0].max()) + 1
    return frozenset(int(i) for i in order[:k])


def cohens_kappa(decisions_a: Sequence[bool], decisions_b: Sequence[bool]) -> float:
    """Chance-corrected agreement ``(P_a - P_e) / (1 - P_e)``."""
    a = np.asarray(decisions_a, dtype=bool)
    b = np.asarray(decisions_b, dtype=bool)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ContractViolation("need two non-empty decision vectors of equal length")
    pa = float(np.mean(a == b))
    ra = float(a.mean())
    rb = float(b.mean())
    pe = ra * rb + (1.0 - ra) * (1.0 - rb)
    if pe == 1.0:
        raise UndefinedKappa("chance agreement is 1")
    return (pa - pe) / (1.0 - pe)


# ---------------------------------------------------------------------------
# screening
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScreenConfig:
    """Budget of a pairwise screen.  ``n_perm`` applies to p-value methods;
    the DPM screen needs no permutations because BFDR works on the
    posterior probabilities directly."""

    alpha: float = 0.05
    fdr_level: float = 0.05
    n_perm: int = 300
    chain: ChainConfig = field(default_factory=ChainConfig)
    hp: Optional[Hyperparams] = None
    workers: int = 1


@dataclass(frozen=True)
class PairOutcome:
    i: int
    j: int
    result: Optional[TestResult]
    error: Optional[str] = None


@dataclass(frozen=True)
class ScreenReport:
    pairs: tuple[PairOutcome, ...]
    method: str
    fdr_level: float
    rejected: frozenset
    runtime: float

    @property
    def failures(self) -> tuple[PairOutcome, ...]:
        return tuple(p for p in self.pairs if p.error is not None)


def _pair_dpm(x1, x2, hp, chain, stream) -> TestResult:
    z = normal_scores(Dataset.from_columns(x1, x2))
    hp = hp or Hyperparams.for_n(z.n)
    ev = estimate_evidence(_run(np.array(z.values), hp, chain,
                                stream.kernel_seed()))
    return TestResult("DPM", ev.bayes_factor, None, False, None, None,
                      ev.posterior_h1)


def pairwise_screen(matrix, method: str, config: Optional[ScreenConfig] = None,
                    rng=0) -> ScreenReport:
    """Test every unordered column pair and control the FDR.

    P-value methods use Benjamini-Hochberg on the permutation p-values.
    The DPM uses Bayesian FDR on ``1 - P(H1 | X)``.  Pair ``(i, j)`` draws
    from stream ``rng.child(i, j)``.  A pair that raises a package error is
    recorded with its message and excluded from the FDR step.
    """
    config = config or ScreenConfig()
    values = matrix.values if isinstance(matrix, Dataset) else np.asarray(matrix, float)
    if values.ndim != 2 or values.shape[1] < 2:
        raise ContractViolation("need a matrix with at least two columns")
    if values.shape[0] < 10:
        raise ContractViolation("need at least 10 rows")
    if method not in ALL_METHODS:
        raise ContractViolation(f"unknown method {method!r}; expected {ALL_METHODS}")
    base = as_stream(rng)
    pairs = list(itertools.combinations(range(values.shape[1]), 2))
    t0 = time.perf_counter()

    def one(ij):
        i, j = ij
        s = base.child(i, j)
        try:
            if method == "DPM":
                res = _pair_dpm(values[:, i], values[:, j], config.hp,
                                config.chain, s)
            else:
                res = baselines.run_baseline(method, values[:, i], values[:, j],
                                             config.alpha, config.n_perm, s)
            return PairOutcome(i, j, res)
        except BnpDepError as exc:
            return PairOutcome(i, j, None, f"{type(exc).__name__}: {exc}")
        except ValueError as exc:
            return PairOutcome(i, j, None, f"{type(exc).__name__}: {exc}")

    raw = ordered_map(one, pairs, config.workers)
    ok = [k for k, p in enumerate(raw) if p.error is None]
    if method == "DPM":
        chosen = bfdr_select([1.0 - raw[k].result.posterior_h1 for k in ok],
                             config.fdr_level)
    elif method == "LR":
        # exact zeros from a perfect fit are floored for the (0, 1] contract
        chosen = bh_select([max(raw[k].result.p_value, np.finfo(float).tiny)
                            for k in ok], config.fdr_level)
    else:
        chosen = bh_select([raw[k].result.p_value for k in ok], config.fdr_level)
    rejected_idx = {ok[c] for c in chosen}
    final = []
    for k, p in enumerate(raw):
        if p.error is None:
            r = p.result
            final.append(PairOutcome(p.i, p.j, TestResult(
                r.method, r.statistic, r.p_value, k in rejected_idx,
                r.n_permutations, r.threshold, r.posterior_h1)))
        else:
            final.append(p)
    rejected = frozenset((raw[k].i, raw[k].j) for k in rejected_idx)
    return ScreenReport(tuple(final), method, config.fdr_level, rejected,
                        time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# power study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerTable:
    """Rejection proportions; ``cells[r, c]`` is row ``rows[r]`` (scenario,
    n) and method ``columns[c]``.  ``significant`` flags cells whose
    two-proportion z-test against the DPM column rejects at 0.05."""

    rows: tuple[tuple[str, int], ...]
    columns: tuple[str, ...]
    cells: np.ndarray
    rejections: np.ndarray
    replicates: tuple[int, ...]
    alpha: float
    significant: np.ndarray

    def cell(self, scenario: str, n: int, method: str) -> float:
        return float(self.cells[self.rows.index((scenario, n)),
                                self.columns.index(method)])


def two_proportion_z(x1: int, n1: int, x2: int, n2: int) -> float:
    """Pooled two-proportion z statistic (0 if the pooled rate is 0 or 1)."""
    p = (x1 + x2) / (n1 + n2)
    if p <= 0.0 or p >= 1.0:
        return 0.0
    se = math.sqrt(p * (1.0 - p) * (1.0 / n1 + 1.0 / n2))
    return (x1 / n1 - x2 / n2) / se


def power_study(scenarios: Sequence[str], methods: Sequence[str],
                n_values: Sequence[int], replicates: int = 100,
                alpha: float = 0.05, rng=0, n_perm: int = 100,
                chain: Optional[ChainConfig] = None,
                method_replicates: Optional[Mapping[str, int]] = None,
                shared_dpm_calibration: bool = True,
                workers: int = 1,
                hp_overrides: Optional[Mapping[str, float]] = None,
                dpm_calibrations: Optional[Mapping[int, CalibratedTest]] = None
                ) -> PowerTable:
    """Rejection rates of each method on replicated simulated datasets.

    Replicate ``k`` of ``(scenario, n)`` is generated from stream
    ``rng.child(s, n, k)`` with ``s`` the scenario's position in
    :data:`~bnpdep.simgen.SCENARIOS`, so every method sees the same data.

    With ``shared_dpm_calibration`` the DPM threshold for each ``n`` comes
    from one set of ``n_perm`` permutation chains (:func:`null_calibration`).
    This is valid because the permutation distribution of the transformed
    data is the same for every tie-free sample of size ``n``.  The
    alternative runs ``n_perm`` chains per replicate.  ``hp_overrides`` are
    passed to :meth:`Hyperparams.for_n` for every ``n``.
    ``dpm_calibrations`` supplies precomputed shared thresholds by ``n``;
    sizes missing from it are calibrated here.
    """
    for s in scenarios:
        if s not in SCENARIOS:
            raise ContractViolation(f"unknown scenario {s!r}")
    for m in methods:
        if m not in ALL_METHODS:
            raise ContractViolation(f"unknown method {m!r}")
    reps = {m: int((method_replicates or {}).get(m, replicates)) for m in methods}
    if min(reps.values(), default=replicates) < 20:
        raise ContractViolation("replicates must be >= 20")
    chain = chain or ChainConfig()
    over = dict(hp_overrides or {})
    base = as_stream(rng)
    calib = dict(dpm_calibrations or {})
    if "DPM" in methods and shared_dpm_calibration:
        for n in sorted(set(int(v) for v in n_values) - set(calib)):
            calib[n] = null_calibration(
                n, Hyperparams.for_n(n, **over), chain, n_perm, alpha,
                base.child(len(SCENARIOS), n), workers)
    rows = [(s, int(n)) for s in scenarios for n in n_values]
    tasks = []
    for r, (s, n) in enumerate(rows):
        for c, m in enumerate(methods):
            for k in range(reps[m]):
                tasks.append((r, c, s, n, m, k))

    def one(t):
        r, c, s, n, m, k = t
        data = generate(s, n, base.child(SCENARIOS.index(s), n, k))
        stream = base.child(SCENARIOS.index(s), n, k, ALL_METHODS.index(m) + 1)
        if m == "DPM":
            res = dpm_test(data, Hyperparams.for_n(n, **over), chain, n_perm, alpha,
                           stream, 1, calib.get(n))
        else:
            res = baselines.run_baseline(m, data.x1, data.x2, alpha, n_perm,
                                         stream)
        return r, c, bool(res.reject)

    counts = np.zeros((len(rows), len(methods)), dtype=np.int64)
    for r, c, rej in ordered_map(one, tasks, workers):
        counts[r, c] += rej
    nrep = np.array([reps[m] for m in methods])
    cells = counts / nrep[None, :]
    sig = np.zeros_like(counts, dtype=bool)
    if "DPM" in methods:
        cd = list(methods).index("DPM")
        for r in range(len(rows)):
            for c in range(len(methods)):
                if c != cd:
                    z = two_proportion_z(int(counts[r, c]), int(nrep[c]),
                                         int(counts[r, cd]), int(nrep[cd]))
                    sig[r, c] = abs(z) > 1.959963984540054
    return PowerTable(tuple(rows), tuple(methods), cells, counts,
                      tuple(int(v) for v in nrep), alpha, sig)

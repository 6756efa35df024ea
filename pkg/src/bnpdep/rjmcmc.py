"""Model-indicator sampler, evidence estimates and the calibrated DPM test.

The chain alternates a Gibbs sweep of the active model with a proposal to
switch between the independent (I) and joint (J) models.  The parameters
``mu``, ``S11``, ``S22`` and ``r`` are shared by both models and carried over
unchanged.  The switch proposes the other model's remaining parameters:

* I to J: the correlation of ``S`` from ``Uniform(-1, 1)``, ``d ~
  Gamma(mean(d_1, d_2), 1)``, sticks from their prior given ``d`` and
  labels from their full conditional;
* J to I: ``d_j ~ Gamma(d, 1)`` per group, prior sticks and independent
  label conditionals.

The map is the identity on the shared block, so the Jacobian is 1.  The
posterior probability of J is the fraction of post-burn-in iterations
spent in J.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import _dpm_kernels as _k
from .baselines import TestResult
from .core_stats import Dataset, RngStream, as_stream, normal_scores
from .dpm_engine import (DpmIndepState, DpmJointState, Hyperparams,
                         check_state, log_likelihood, log_prior)
from .errors import ChainAbort, ContractViolation
from .parallel import ordered_map

log = logging.getLogger(__name__)


class ModelIndicator(str, Enum):
    I = "I"
    J = "J"


@dataclass(frozen=True)
class ChainConfig:
    """Chain settings.

    ``init`` selects Step 0.  ``"data"`` starts the component means at
    randomly chosen observations, ``S`` at the sample covariance and ``r``
    at the grid value nearest ``init_r``, with labels, sticks and
    concentrations drawn from their conditionals.  ``"prior"`` draws the
    starting model's parameters from the prior.  With the default chain
    length, the data start finds clustered configurations that a prior
    start seldom reaches.
    """

    iterations: int = 2000
    burn_in: int = 500
    switch_probability: float = 0.5
    initial_model: ModelIndicator = ModelIndicator.I
    init: str = "data"
    init_r: float = 0.2

    def __post_init__(self):
        if self.iterations < 1:
            raise ContractViolation("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ContractViolation("need 0 <= burn_in < iterations")
        if self.switch_probability != 0.5:
            raise ContractViolation("switch_probability is fixed at 0.5")
        if self.init not in ("data", "prior"):
            raise ContractViolation("init must be 'data' or 'prior'")
        if not 0.0 < self.init_r < 1.0:
            raise ContractViolation("init_r must lie in (0, 1)")
        object.__setattr__(self, "initial_model",
                           ModelIndicator(self.initial_model))


@dataclass(frozen=True)
class ChainTrace:
    """Post-burn-in record of one chain.

    ``indicator`` is 1 where the chain was in J.  Counts are per direction,
    ``(I->J, J->I)``, over all iterations.
    """

    indicator: np.ndarray
    loglik: np.ndarray
    propose_count: tuple[int, int]
    accept_count: tuple[int, int]

    @property
    def models(self) -> tuple[ModelIndicator, ...]:
        return tuple(ModelIndicator.J if m else ModelIndicator.I
                     for m in self.indicator)

    def __len__(self) -> int:
        return int(self.indicator.size)


@dataclass(frozen=True)
class EvidenceResult:
    posterior_h1: float
    bayes_factor: float
    n_samples: int


@dataclass(frozen=True)
class CalibratedTest:
    """Permutation-calibrated threshold for the Bayes factor."""

    threshold_T: float
    n_permutations: int
    alpha: float
    permuted_bfs: tuple = field(default=(), repr=False)


# ---------------------------------------------------------------------------
# cross-model move
# ---------------------------------------------------------------------------

def _x(data) -> np.ndarray:
    values = data.values if isinstance(data, Dataset) else np.asarray(data, float)
    return np.array(values, dtype=float, order="C")


def propose_cross_model(model, state, hp: Hyperparams, data, rng):
    """Propose the other model's state from the current one.

    Returns ``(proposed_state, log_q_forward, log_q_reverse)``.  The forward
    density is that of the draws just made.  The reverse density is the
    density of proposing the current model-specific block back from the
    proposed state.
    """
    model = ModelIndicator(model)
    x = _x(data)
    n = x.shape[0]
    check_state(state, n)
    k = state.mu.shape[0]
    as_stream(rng)
    _k.seed(as_stream(rng).next_kernel_seed())
    S_new = np.zeros((2, 2))
    if model is ModelIndicator.I:
        if not isinstance(state, DpmIndepState):
            raise ContractViolation("model I needs a DpmIndepState")
        lv = np.empty(k)
        w = np.empty(k)
        d = np.empty(1)
        g = np.zeros(n, dtype=np.int64)
        lq_f, lq_r = _k.propose_i_to_j(x, state.mu, state.S, state.log1m_v,
                                       state.w, np.asarray(state.d, float),
                                       state.g, state.r, 1.0, S_new, lv, w, d, g)
        new = DpmJointState(state.mu.copy(), S_new, lv, w, float(d[0]), g,
                            state.r_index, state.r)
    else:
        if not isinstance(state, DpmJointState):
            raise ContractViolation("model J needs a DpmJointState")
        lv = np.empty((2, k))
        w = np.empty((2, k))
        d = np.empty(2)
        g = np.zeros((2, n), dtype=np.int64)
        lq_f, lq_r = _k.propose_j_to_i(x, state.mu, state.S, state.log1m_v,
                                       state.w, np.array([state.d]), state.g,
                                       state.r, 1.0, S_new, lv, w, d, g)
        new = DpmIndepState(state.mu.copy(), S_new, lv, w, d, g,
                            state.r_index, state.r)
    return new, float(lq_f), float(lq_r)


def _model_of(state) -> ModelIndicator:
    if isinstance(state, DpmIndepState):
        return ModelIndicator.I
    if isinstance(state, DpmJointState):
        return ModelIndicator.J
    raise ContractViolation(f"not a DPM state: {type(state)!r}")


def acceptance_log_ratio(current, proposed, log_q_fwd: float, log_q_rev: float,
                         data, hp: Hyperparams) -> float:
    """``log alpha = [l' + pi' + q_rev] - [l + pi + q_fwd]``.

    The switch probabilities cancel and the Jacobian is 1.  A proposal
    within the same model is the ordinary Gibbs update, for which the ratio
    is 0.
    """
    m_cur = _model_of(current)
    m_new = _model_of(proposed)
    if m_cur is m_new:
        return 0.0
    num = log_likelihood(m_new, proposed, data) + log_prior(m_new, proposed, hp) \
        + log_q_rev
    den = log_likelihood(m_cur, current, data) + log_prior(m_cur, current, hp) \
        + log_q_fwd
    return num - den


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------

def _run(x: np.ndarray, hp: Hyperparams, config: ChainConfig, seed: int,
         tau: float = 1.0) -> ChainTrace:
    n = x.shape[0]
    k = hp.K
    mu = np.zeros((k, 2))
    S = np.eye(2)
    vI = np.zeros((2, k))
    wI = np.full((2, k), 1.0 / k)
    dI = np.ones(2)
    gI = np.zeros((2, n), dtype=np.int64)
    vJ = np.zeros(k)
    wJ = np.full(k, 1.0 / k)
    dJ = np.ones(1)
    gJ = np.zeros(n, dtype=np.int64)
    model = 0 if config.initial_model is ModelIndicator.I else 1
    grid = hp._grid()
    df, wsc1, wscj = hp._df(), hp._wsc1(), hp._wscj()
    _k.seed(seed)
    r_init = config.init_r if config.init == "data" else 0.0
    ri = _k.init_state(x, mu, S, vI, wI, dI, gI, vJ, wJ, dJ, gJ, grid, hp.a,
                       hp.b, df, wsc1, wscj, r_init, tau, model)
    models, loglik, counts, status, _, _ = _k.run_chain(
        x, mu, S, vI, wI, dI, gI, vJ, wJ, dJ, gJ, ri, model, grid, hp.a, hp.b,
        df, wsc1, wscj, config.iterations, config.burn_in, tau)
    if status != _k.OK:
        raise ChainAbort("covariance draws failed repeatedly; chain stopped")
    return ChainTrace(models, loglik, (int(counts[0]), int(counts[2])),
                      (int(counts[1]), int(counts[3])))


def run_chain(data, hp: Optional[Hyperparams] = None,
              config: Optional[ChainConfig] = None, rng=0,
              tau: float = 1.0) -> ChainTrace:
    """Run one model-indicator chain on transformed data.

    ``tau = 0`` drops the likelihood, so the chain samples the prior over
    models and parameters (occupancy of J should then be 1/2).
    """
    x = _x(data)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ContractViolation("run_chain needs an n x 2 dataset")
    hp = hp or Hyperparams.for_n(x.shape[0])
    config = config or ChainConfig()
    return _run(x, hp, config, as_stream(rng).kernel_seed(), tau)


def estimate_evidence(trace: ChainTrace, prior_odds: float = 1.0) -> EvidenceResult:
    """Posterior probability of H1 with add-one smoothing, and the Bayes
    factor ``posterior odds / prior odds``."""
    n = len(trace)
    if n == 0:
        raise ContractViolation("empty trace")
    if not prior_odds > 0:
        raise ContractViolation("prior_odds must be positive")
    p = (float(np.sum(trace.indicator)) + 1.0) / (n + 2.0)
    return EvidenceResult(p, p / (1.0 - p) / prior_odds, n)


# ---------------------------------------------------------------------------
# calibration and the test
# ---------------------------------------------------------------------------

def order_statistic_threshold(bfs, alpha: float) -> float:
    """The ``ceil((m + 1)(1 - alpha))``-th smallest of ``m`` permuted BFs
    (infinite if that rank exceeds ``m``)."""
    bfs = np.sort(np.asarray(bfs, dtype=float))
    rank = math.ceil((bfs.size + 1) * (1.0 - alpha) - 1e-9)
    if rank > bfs.size:
        return math.inf
    return float(bfs[max(rank, 1) - 1])


def _bf(x, hp, config, stream: RngStream) -> float:
    return estimate_evidence(_run(x, hp, config, stream.kernel_seed())).bayes_factor


def permutation_threshold(data, hp: Optional[Hyperparams] = None,
                          config: Optional[ChainConfig] = None,
                          n_perm: int = 100, alpha: float = 0.05, rng=0,
                          workers: int = 1) -> CalibratedTest:
    """Threshold ``T`` from chains run on ``n_perm`` row permutations of
    group 2.  Permutation ``p`` uses the stream ``rng.child(p)``."""
    if n_perm < 19:
        raise ContractViolation(f"n_perm must be >= 19, got {n_perm}")
    if not 0 < alpha < 1:
        raise ContractViolation("alpha must lie in (0, 1)")
    x = _x(data)
    hp = hp or Hyperparams.for_n(x.shape[0])
    config = config or ChainConfig()
    base = as_stream(rng)

    def one(p):
        s = base.child(p)
        xp = x.copy()
        xp[:, 1] = x[s.fresh_generator().permutation(x.shape[0]), 1]
        return _bf(xp, hp, config, s.child(0))

    bfs = ordered_map(one, range(n_perm), workers)
    return CalibratedTest(order_statistic_threshold(bfs, alpha), n_perm, alpha,
                          tuple(bfs))


def canonical_null_data(n: int) -> Dataset:
    """The transformed data every tie-free sample of size ``n`` shares up to
    the row pairing.  Permutation calibrations computed on it apply to any
    such sample."""
    z = np.arange(n, dtype=float)
    return normal_scores(Dataset(np.column_stack([z, z])))


def null_calibration(n: int, hp: Optional[Hyperparams] = None,
                     config: Optional[ChainConfig] = None, n_perm: int = 100,
                     alpha: float = 0.05, rng=0, workers: int = 1) -> CalibratedTest:
    """Permutation threshold valid for every tie-free dataset of size ``n``.

    After the normal-score transform both columns of a tie-free sample are
    the same fixed score vector, so the permuted datasets, and hence the
    threshold's distribution, depend on ``n`` alone.
    """
    return permutation_threshold(canonical_null_data(n), hp, config, n_perm,
                                 alpha, rng, workers)


def _has_ties(data: Dataset) -> bool:
    v = data.values
    return any(np.unique(v[:, j]).size != v.shape[0] for j in range(v.shape[1]))


def dpm_test(data: Dataset, hp: Optional[Hyperparams] = None,
             config: Optional[ChainConfig] = None, n_perm: int = 100,
             alpha: float = 0.05, rng=0, workers: int = 1,
             calibration: Optional[CalibratedTest] = None) -> TestResult:
    """DPM test of independence on raw data with one column per group.

    Applies the normal-score transform to each column, runs the observed
    chain (stream ``rng.child(0)``) and rejects when its Bayes factor exceeds
    the permutation threshold (streams ``rng.child(1, p)``).  A
    ``calibration`` from :func:`null_calibration` for the same ``n`` and
    settings may be passed to skip the permutation chains.  It is ignored
    when the data have ties, because shared calibration then no longer
    applies.
    """
    if not isinstance(data, Dataset):
        data = Dataset(np.asarray(data, dtype=float))
    if data.d1 != 1 or data.d2 != 1:
        raise ContractViolation("dpm_test supports one column per group")
    z = normal_scores(data)
    x = _x(z)
    hp = hp or Hyperparams.for_n(x.shape[0])
    config = config or ChainConfig()
    base = as_stream(rng)
    ev = estimate_evidence(_run(x, hp, config, base.child(0).kernel_seed()))
    if calibration is not None and _has_ties(data):
        log.warning("tied data: shared calibration ignored, recalibrating")
        calibration = None
    if calibration is None:
        calibration = permutation_threshold(z, hp, config, n_perm, alpha,
                                            base.child(1), workers)
    return TestResult("DPM", ev.bayes_factor, None,
                      bool(ev.bayes_factor > calibration.threshold_T),
                      calibration.n_permutations, calibration.threshold_T,
                      ev.posterior_h1)

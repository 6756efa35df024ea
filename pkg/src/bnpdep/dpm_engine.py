"""Parameter states and Gibbs sweeps for the two truncated DPM models.

Under the independent model each group has its own mixture; component
variances are ``r S_j`` and component means have prior ``N(0, (1 - r) S_j)``.
Under the joint model the pair is a single 2-D mixture with component
covariance ``r diag(S)`` and mean prior ``N(0, (1 - r) S)``.  ``r`` lives
on a finite grid with a uniform prior; the concentration ``d`` has a
``Gamma(a, rate=b)`` prior and covariance matrices an inverse-Wishart prior
``IW(rho, rho W)``.

Labels are 0-based.  Sticks are stored as ``log(1 - v)``; the ``v``
property converts back.

The heavy lifting lives in compiled kernels (``_dpm_kernels``).  These
draw from a thread-local generator that each public entry point seeds from
its :class:`~bnpdep.core_stats.RngStream`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _dpm_kernels as _k
from .core_stats import Dataset, as_stream
from .errors import ContractViolation, RetryableNumericalError

# (n, a, b) rows of the sample-size dependent stick-breaking prior
AB_TABLE = ((100, 1.5, 2.5), (200, 1.0, 4.0), (300, 1.0, 4.5), (500, 0.8, 4.6))

DEFAULT_R_GRID = tuple(np.round(np.arange(1, 100) / 100.0, 2))


def table_ab(n: int) -> tuple[float, float]:
    """``(a, b)`` for sample size ``n``: the tabulated values, linearly
    interpolated in ``log n`` between rows and clamped outside them."""
    if n <= 0:
        raise ContractViolation("n must be positive")
    ln = np.log([row[0] for row in AB_TABLE])
    a = float(np.interp(math.log(n), ln, [row[1] for row in AB_TABLE]))
    b = float(np.interp(math.log(n), ln, [row[2] for row in AB_TABLE]))
    return a, b


def _spd(m, dim: int, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape != (dim, dim):
        raise ContractViolation(f"{name} must be {dim}x{dim}")
    if not np.allclose(m, m.T) or np.any(np.linalg.eigvalsh(m) <= 0):
        raise ContractViolation(f"{name} must be symmetric positive definite")
    return m


@dataclass(frozen=True)
class Hyperparams:
    """Prior hyperparameters shared by both models.

    ``iw_scale_*`` is ``W`` in the prior ``IW(rho, rho W)``.  The defaults
    for ``rho`` (dimension + 2) and ``W = I`` are weakly informative on
    standardized data.
    """

    K: int = 20
    a: float = 1.5
    b: float = 2.5
    iw_df_1: float = 3.0
    iw_df_2: float = 3.0
    iw_df_joint: float = 4.0
    iw_scale_1: np.ndarray = field(default_factory=lambda: np.eye(1))
    iw_scale_2: np.ndarray = field(default_factory=lambda: np.eye(1))
    iw_scale_joint: np.ndarray = field(default_factory=lambda: np.eye(2))
    r_grid: tuple = DEFAULT_R_GRID

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ContractViolation("K must be an integer >= 2")
        if not (self.a > 0 and self.b > 0):
            raise ContractViolation("a and b must be positive")
        for df, dim in ((self.iw_df_1, 1), (self.iw_df_2, 1),
                        (self.iw_df_joint, 2)):
            if not df > dim - 1:
                raise ContractViolation(f"IW df {df} must exceed {dim - 1}")
        object.__setattr__(self, "iw_scale_1", _spd(self.iw_scale_1, 1, "iw_scale_1"))
        object.__setattr__(self, "iw_scale_2", _spd(self.iw_scale_2, 1, "iw_scale_2"))
        object.__setattr__(self, "iw_scale_joint",
                           _spd(self.iw_scale_joint, 2, "iw_scale_joint"))
        grid = tuple(float(r) for r in self.r_grid)
        if not grid or any(not 0.0 < r < 1.0 for r in grid) or \
                any(b <= a for a, b in zip(grid, grid[1:])):
            raise ContractViolation("r_grid must be ascending and inside (0, 1)")
        object.__setattr__(self, "r_grid", grid)

    @classmethod
    def for_n(cls, n: int, **overrides) -> "Hyperparams":
        a, b = table_ab(n)
        return cls(**{"a": a, "b": b, **overrides})

    # kernel views
    def _grid(self) -> np.ndarray:
        return np.asarray(self.r_grid, dtype=float)

    def _df(self) -> np.ndarray:
        return np.array([self.iw_df_1, self.iw_df_2, self.iw_df_joint])

    def _wsc1(self) -> np.ndarray:
        return np.array([self.iw_scale_1[0, 0], self.iw_scale_2[0, 0]])

    def _wscj(self) -> np.ndarray:
        return np.array(self.iw_scale_joint, dtype=float)


def stick_breaking(v) -> np.ndarray:
    """``w_1 = v_1``, ``w_l = v_l prod_{i<l} (1 - v_i)``; needs ``v_K = 1``."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ContractViolation("v must be a non-empty vector")
    if v[-1] != 1.0:
        raise ContractViolation("the last stick must equal 1")
    if np.any((v < 0) | (v > 1)):
        raise ContractViolation("sticks must lie in [0, 1]")
    rem = np.concatenate([[1.0], np.cumprod(1.0 - v[:-1])])
    return v * rem


@dataclass
class DpmIndepState:
    """Independent-model state.  Column ``j`` of ``mu`` holds group ``j``'s
    component means; ``S`` is diagonal."""

    mu: np.ndarray
    S: np.ndarray
    log1m_v: np.ndarray
    w: np.ndarray
    d: np.ndarray
    g: np.ndarray
    r_index: int
    r: float

    @property
    def v(self) -> np.ndarray:
        return -np.expm1(self.log1m_v)

    @property
    def K(self) -> int:
        return self.mu.shape[0]

    def copy(self) -> "DpmIndepState":
        return DpmIndepState(self.mu.copy(), self.S.copy(), self.log1m_v.copy(),
                             self.w.copy(), self.d.copy(), self.g.copy(),
                             int(self.r_index), float(self.r))


@dataclass
class DpmJointState:
    """Joint-model state; ``S`` is a full 2x2 covariance."""

    mu: np.ndarray
    S: np.ndarray
    log1m_v: np.ndarray
    w: np.ndarray
    d: float
    g: np.ndarray
    r_index: int
    r: float

    @property
    def v(self) -> np.ndarray:
        return -np.expm1(self.log1m_v)

    @property
    def K(self) -> int:
        return self.mu.shape[0]

    @property
    def rho(self) -> float:
        return float(self.S[0, 1] / math.sqrt(self.S[0, 0] * self.S[1, 1]))

    def copy(self) -> "DpmJointState":
        return DpmJointState(self.mu.copy(), self.S.copy(), self.log1m_v.copy(),
                             self.w.copy(), float(self.d), self.g.copy(),
                             int(self.r_index), float(self.r))


def check_state(state, n: int | None = None) -> None:
    """Raise ``ContractViolation`` unless every state invariant holds."""
    k = state.mu.shape[0]
    w = np.atleast_2d(state.w)
    lv = np.atleast_2d(state.log1m_v)
    if np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-12) or np.any(w < 0):
        raise ContractViolation("weights must be non-negative and sum to 1")
    if np.any(lv[:, -1] != -np.inf) or np.any(lv[:, :-1] > 0):
        raise ContractViolation("sticks out of range or last stick != 1")
    if np.any(np.asarray(state.d) <= 0):
        raise ContractViolation("concentration must be positive")
    g = np.asarray(state.g)
    if g.size and (g.min() < 0 or g.max() >= k):
        raise ContractViolation("labels out of range")
    if n is not None and g.shape[-1] != n:
        raise ContractViolation("label count does not match the data")
    if np.any(np.linalg.eigvalsh(state.S) <= 0):
        raise ContractViolation("S must be positive definite")
    if not 0.0 < state.r < 1.0:
        raise ContractViolation("r must lie in (0, 1)")


def _x(data) -> np.ndarray:
    values = data.values if isinstance(data, Dataset) else np.asarray(data, float)
    if values.ndim != 2 or values.shape[1] != 2:
        raise ContractViolation("sweeps support one column per group only")
    return np.array(values, dtype=float, order="C")


def _seed(rng) -> None:
    _k.seed(as_stream(rng).next_kernel_seed())


def prior_state(model: str, n: int, hp: Hyperparams, rng):
    """Draw a state (with ``n`` labels) from the prior of ``model``."""
    _seed(rng)
    k = hp.K
    mu = np.zeros((k, 2))
    S = np.zeros((2, 2))
    if model == "I":
        lv = np.empty((2, k))
        w = np.empty((2, k))
        d = np.empty(2)
        g = np.zeros((2, n), dtype=np.int64)
        ri = _k.draw_prior_indep(n, mu, S, lv, w, d, g, hp._grid(), hp.a,
                                 hp.b, hp._df(), hp._wsc1())
        return DpmIndepState(mu, S, lv, w, d, g, int(ri), hp.r_grid[ri])
    if model == "J":
        lv = np.empty(k)
        w = np.empty(k)
        d = np.empty(1)
        g = np.zeros(n, dtype=np.int64)
        ri = _k.draw_prior_joint(n, mu, S, lv, w, d, g, hp._grid(), hp.a,
                                 hp.b, hp._df(), hp._wscj())
        return DpmJointState(mu, S, lv, w, float(d[0]), g, int(ri),
                             hp.r_grid[ri])
    raise ContractViolation(f"unknown model {model!r}")


def gibbs_sweep_indep(state: DpmIndepState, data, hp: Hyperparams, rng,
                      tau: float = 1.0) -> DpmIndepState:
    """One systematic scan of the independent-model full conditionals.

    Per group: component means, then ``S_j`` jointly with the empty
    components' means, labels, sticks and ``d_j``.  Then ``r`` (shared by
    both groups) jointly with all means: ``r`` is drawn from its conditional
    with the means integrated out and the means are redrawn given it.  The
    blocking leaves the same posterior invariant as the one-at-a-time scan
    but lets ``r`` move despite the empty components.

    ``tau = 0`` removes the likelihood (prior-only target).
    """
    x = _x(data)
    check_state(state, x.shape[0])
    s = state.copy()
    _seed(rng)
    d = np.array(s.d, dtype=float)
    ri = _k.sweep_indep(x, s.mu, s.S, s.log1m_v, s.w, d, s.g, s.r_index,
                        hp._grid(), hp.a, hp.b, hp._df(), hp._wsc1(), tau)
    s.d = d
    s.r_index = int(ri)
    s.r = hp.r_grid[ri]
    return s


def gibbs_sweep_joint(state: DpmJointState, data, hp: Hyperparams, rng,
                      tau: float = 1.0) -> DpmJointState:
    """One systematic scan of the joint-model full conditionals.

    Same blocking as :func:`gibbs_sweep_indep`.  The conjugate inverse-
    Wishart draw for ``S`` assumes component covariance ``r S`` rather than
    ``r diag(S)``, so it is used as an independence Metropolis-Hastings
    proposal with the exact correction.

    Raises
    ------
    RetryableNumericalError
        If a covariance draw kept failing; the input state is untouched.
    """
    x = _x(data)
    check_state(state, x.shape[0])
    s = state.copy()
    _seed(rng)
    d = np.array([s.d])
    ri, status = _k.sweep_joint(x, s.mu, s.S, s.log1m_v, s.w, d, s.g,
                                s.r_index, hp._grid(), hp.a, hp.b, hp._df(),
                                hp._wscj(), tau)
    if status != _k.OK:
        raise RetryableNumericalError("covariance draw failed repeatedly")
    s.d = float(d[0])
    s.r_index = int(ri)
    s.r = hp.r_grid[ri]
    return s


def log_likelihood(model: str, state, data) -> float:
    """Label-conditional log-likelihood of the data under ``model``."""
    x = _x(data)
    if model == "I":
        return float(_k.log_lik_indep(x, state.mu, state.S, state.g, state.r))
    if model == "J":
        return float(_k.log_lik_joint(x, state.mu, state.S, state.g, state.r))
    raise ContractViolation(f"unknown model {model!r}")


def log_prior(model: str, state, hp: Hyperparams) -> float:
    """Sum of the log prior densities of every parameter of ``model``.

    Includes the labels (``sum log w_g``).  For the joint model the
    covariance density is taken in (variance, variance, correlation)
    coordinates, the parameterization shared with the independent model.
    """
    if model == "I":
        return float(_k.log_prior_indep(state.mu, state.S, state.log1m_v,
                                        state.w, np.asarray(state.d, float),
                                        state.g, state.r_index, hp._grid(),
                                        hp.a, hp.b, hp._df(), hp._wsc1()))
    if model == "J":
        return float(_k.log_prior_joint(state.mu, state.S, state.log1m_v,
                                        state.w, np.array([state.d]), state.g,
                                        state.r_index, hp._grid(), hp.a, hp.b,
                                        hp._df(), hp._wscj()))
    raise ContractViolation(f"unknown model {model!r}")


GEWEKE_COLUMNS = ("r", "S11", "S22", "S12", "d", "mu11", "mu12", "occupied",
                  "model")


def geweke_draws(mode: str, n: int, K: int, draws: int, steps: int,
                 hp: Hyperparams, rng) -> tuple[np.ndarray, np.ndarray]:
    """Marginal-conditional vs successive-conditional simulation.

    ``mode`` is ``"I"`` or ``"J"`` for the Gibbs sweeps or ``"RJ"`` for the
    full model-switching step.  Each successive-conditional draw starts from
    the prior and alternates ``steps`` times between simulating data and
    updating the parameters.  If the update leaves the posterior invariant
    both samples follow the prior.  Returns two ``draws x 9`` arrays with
    columns :data:`GEWEKE_COLUMNS`.
    """
    modes = {"I": 0, "J": 1, "RJ": 2}
    if mode not in modes:
        raise ContractViolation(f"mode must be one of {tuple(modes)}")
    hp = replace(hp, K=K)
    _seed(rng)
    return _k.geweke(n, K, draws, steps, modes[mode], hp._grid(), hp.a, hp.b,
                     hp._df(), hp._wsc1(), hp._wscj())

"""Tests of independence between two variables: a Dirichlet process mixture
model-comparison test with permutation calibration, and frequentist
baselines (linear regression, distance covariance, HHG, DDP, MIC)."""

from .core_stats import Dataset, RngStream, normal_scores
from .baselines import TestResult, run_baseline
from .dpm_engine import Hyperparams
from .rjmcmc import ChainConfig, dpm_test, null_calibration, run_chain
from .screening import (bfdr_select, bh_select, cohens_kappa, pairwise_screen,
                        power_study)
from .simgen import SCENARIOS, generate

__version__ = "0.1.0"

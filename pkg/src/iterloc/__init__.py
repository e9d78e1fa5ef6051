"""Iterative Bayesian RSSI localization: simulation, inference, analysis."""

from .scenario import Anchor, ChannelParams, Position, Scenario, default_scenario, distance
from .channel import MeasurementBatch, mean_rss, sample_batch
from .model import (
    AnchorPriors,
    HalfNormal,
    Normal,
    PosteriorDensity,
    PriorSet,
    Uniform,
    constrain,
    initial_priors,
    log_posterior,
    sign_informed_priors,
    unconstrain,
    updated_priors,
)
from .sampler import SampleChain, SamplerConfig, initialize, sample
from .diagnostics import Diagnostics, diagnostics
from .estimator import EstimatorState, IterativeEstimator, PosteriorSummary, run_campaign
from .analysis import KdeGrid, RmseCurve, grid_posterior_oracle, kde_2d, rmse_curve

__version__ = "0.1.0"

__all__ = [
    "Anchor",
    "AnchorPriors",
    "ChannelParams",
    "Diagnostics",
    "EstimatorState",
    "HalfNormal",
    "IterativeEstimator",
    "KdeGrid",
    "MeasurementBatch",
    "Normal",
    "Position",
    "PosteriorDensity",
    "PosteriorSummary",
    "PriorSet",
    "RmseCurve",
    "SampleChain",
    "SamplerConfig",
    "Scenario",
    "Uniform",
    "constrain",
    "default_scenario",
    "diagnostics",
    "distance",
    "grid_posterior_oracle",
    "initial_priors",
    "initialize",
    "kde_2d",
    "log_posterior",
    "mean_rss",
    "rmse_curve",
    "run_campaign",
    "sample",
    "sample_batch",
    "sign_informed_priors",
    "unconstrain",
    "updated_priors",
]

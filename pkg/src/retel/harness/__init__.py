"""Batch experiment runner: configs, seeded replication and CSV results."""

from .config import ConfigError, ExperimentConfig, TauRule, load_config, parse_config
from .experiments import (
    PSRF_LIMIT,
    RUNNERS,
    kl_replicate,
    kl_target,
    lambda_pair,
    parallel_map,
    run_coverage,
    run_kl,
    run_lambda_convergence,
    run_logratio_curve,
    run_uniformity,
    run_wilks,
    variant_gap_medians,
)
from .small_area import AreaData, IngestionError, deviation_metrics, fit_areas, read_areas, run_small_area, synthetic_areas, write_areas
from .rng import seed_sequence, stream
from .table import HEADER, ResultTable, Row, qualify

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "TauRule",
    "load_config",
    "parse_config",
    "PSRF_LIMIT",
    "RUNNERS",
    "kl_replicate",
    "kl_target",
    "lambda_pair",
    "seed_sequence",
    "stream",
    "parallel_map",
    "run_coverage",
    "run_kl",
    "run_lambda_convergence",
    "run_logratio_curve",
    "run_uniformity",
    "run_wilks",
    "variant_gap_medians",
    "AreaData",
    "IngestionError",
    "deviation_metrics",
    "fit_areas",
    "read_areas",
    "run_small_area",
    "synthetic_areas",
    "write_areas",
    "HEADER",
    "ResultTable",
    "Row",
    "qualify",
]

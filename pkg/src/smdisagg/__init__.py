"""Soil-moisture disaggregation: information-theoretic clustering plus
per-cluster kernel ridge regression, with a relevant-information baseline,
a synthetic multiscale dataset generator, and an evaluation harness."""

from .config import RunConfig, format_config, parse_config
from .grid import Grid, VarTag, add_noise, aggregate, read_grid, replicate, write_grid
from .itclust import (
    ClusterParams,
    FeatureMatrix,
    MembershipMatrix,
    anneal_schedule,
    cluster,
    gaussian_kernel,
    gram_matrix,
    jcs_estimate,
    jcs_gradient,
    silverman_sigma,
    update_membership_row,
)
from .kridge import KernelModel, fit, predict, predict_batch
from .metrics import error_fraction_below, kld, rmse, rmse_by_landcover, ztest_threshold
from .pipeline import (
    CvGrids,
    SrrmParams,
    build_features,
    cross_validate,
    disaggregate_day,
    pri_day,
    run_season,
    train_cluster_models,
)
from .pri import bayes_initial, fit_bayes, pri_optimize
from .synth import (
    CropCalendar,
    Scene,
    SceneSpec,
    SeasonDataset,
    default_calendar,
    generate_landcover,
    generate_scene,
    generate_season,
    write_season,
)

__version__ = "0.1.0"

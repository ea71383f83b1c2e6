__all__ = [
    "MultiScalePointCloud",
    "PointLevel",
    "multiscale_sample",
    "level_seed",
    "FeatureSchema",
    "FeatureMatrix",
    "DEFAULT_FREQUENCIES",
    "fourier_features",
    "surface_features",
    "surface_schema",
    "idw_transfer",
    "NormStats",
    "EPSILON_FLOOR",
    "fit_norm",
    "apply_norm",
    "invert_norm",
]

from .multiscale import MultiScalePointCloud, PointLevel, multiscale_sample, level_seed
from .features import (
    FeatureSchema,
    FeatureMatrix,
    DEFAULT_FREQUENCIES,
    fourier_features,
    surface_features,
    surface_schema,
)
from .transfer import idw_transfer
from .normalization import NormStats, EPSILON_FLOOR, fit_norm, apply_norm, invert_norm

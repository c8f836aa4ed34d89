from core.metrics.distribution import GaussianSummary, fit_gaussian, frechet_distance, mmd_poly
from core.metrics.latent import (
    GapProfile,
    InversionResult,
    PathLengthStats,
    interpolation_gaps,
    invert,
    path_length,
)
from core.metrics.neighbors import NeighborReport, nearest_neighbor_report, reverse_neighbor_report

__all__ = [
    "GaussianSummary",
    "fit_gaussian",
    "frechet_distance",
    "mmd_poly",
    "GapProfile",
    "InversionResult",
    "PathLengthStats",
    "interpolation_gaps",
    "invert",
    "path_length",
    "NeighborReport",
    "nearest_neighbor_report",
    "reverse_neighbor_report",
]

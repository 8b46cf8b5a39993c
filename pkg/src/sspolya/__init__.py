"""Spike-and-slab Polya tree posteriors on [0, 1] with adaptive sup-norm credible bands."""

__version__ = "0.1.0"

from .dyadic import CountTree, DyadicTree, NodeIndex, count_data, truncation_level
from .haar import HistogramDensity, WaveletField, WeightSequence, haar_analyze, haar_synthesize, multiscale_norm
from .sspt import PosteriorTree, PriorSpec, draw, fit, mean_density, median_density, sample_densities
from .bands import BandResult, BandSpec, credible_band

__all__ = [
    "BandResult", "BandSpec", "CountTree", "DyadicTree", "HistogramDensity", "NodeIndex",
    "PosteriorTree", "PriorSpec", "WaveletField", "WeightSequence", "count_data", "credible_band",
    "draw", "fit", "haar_analyze", "haar_synthesize", "mean_density", "median_density",
    "multiscale_norm", "sample_densities", "truncation_level",
]

"""Weighted-ensemble sampling benchmark toolkit.

Toy potentials and an overdamped Langevin propagator, TICA, a weighted
ensemble driver with minimal adaptive binning, Markov state models with
PCCA+ macrostates, and distributional metrics for comparing a weighted
sample against unbiased ground truth.
"""
from .core import (Conformation, Ensemble, Trajectory, Walker, WeightedFrameSet, WeightSource,
                   normalize, total_weight)
from .potentials import PotentialKind, PotentialSpec, energy, force
from .propagate import PropagatorConfig, propagate_batch, propagate_segment, run_reference
from .tica import FeatureKind, FeatureSpec, TicaModel, featurize, fit_tica, project
from .we import MabBinning, WeConfig, resample, run_we, update_mab_bins
from .msm import RectilinearGrid, count_matrix, estimate_msm, msm_reweight, stationary_distribution, \
    transition_matrix
from .macrostates import fit_macrostates, kmeans, pcca
from .metrics import Histogram1D, build_report, contact_map_diff, coverage, kl_divergence, \
    radius_of_gyration, w1_distance, weighted_kde

__version__ = "0.1.0"

"""Ensemble observability of linear systems from population snapshots."""

__version__ = "0.1.0"

from .lift import (MultiIndexBasis, TensorSystem, enumerate_basis, lift_generator, lift_matrix,
                   lift_vector, num_monomials, tensor_system)
from .observability import (LinearSystem, analyze, constrained_hautus_independence, hautus_test,
                            is_observable, rational_independence_test, richness_check,
                            tensor_observability, unobservable_subspace)
from .ensemble import (GaussianMixture, analytic_moments, empirical_moments, indistinguishability_check,
                       output_variance, pushforward, sample, snapshots)
from .tomo import PixelGrid, assemble, kaczmarz, reconstruct, strip_row
from .moments import (cumulant_design_matrix, full_pipeline, moments_to_cumulants, output_moment_map,
                      reconstruct_cumulants_independent, reconstruct_moments)

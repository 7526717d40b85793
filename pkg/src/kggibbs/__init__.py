"""Numerical laboratory for Gibbs measures of the 1D cubic Klein-Gordon
equation with a localized nonlinearity.

The package builds the finite-dimensional Gaussian and Gibbs ensembles on
band-limited fields, integrates the truncated Hamiltonian flow, and turns
the invariance and convergence claims about those ensembles into seeded,
falsifiable statistical experiments.
"""

__version__ = "0.1.0"

from .spectral import (FrequencyGrid, SpectralField, WeightFunction, SeminormSpec,
                       apply_bessel_power, synthesize, analyze, evaluate_at,
                       truncate_pi_k, embed, periodize_weight, seminorm, metric_d)
from .random_field import (RngStream, IncrementTable, sample_increments,
                           refine_increments, build_phi, pointwise_variance,
                           cauchy_rate, l2_mass_profile)
from .measures import (MeasureSpec, GibbsSample, sample_mu_k, gibbs_weight,
                       sample_rho_k, sample_rho_k_batch, estimate_gamma_k,
                       tail_survival)
from .dynamics import (FlowConfig, TrajectoryRecord, linear_flow, nonlinear_term,
                       hamiltonian, evolve_psi_k, picard_solve, energy_monitor,
                       liouville_check, cross_k_convergence, propagation_cone_check)
from .invariance import (Observable, StatReport, ks_two_sample, default_observables,
                         run_linear_invariance, run_gibbs_invariance,
                         coupled_distance_diagnostic)

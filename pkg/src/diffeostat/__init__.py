"""Diffeological statistical models on finite sample spaces.

Fisher metric via logarithmic representations, Markov morphisms and
sufficiency, Fisher-metric monotonicity, and a Cramér-Rao inequality for
feature-mapped estimators.
"""

from .errors import *  # noqa: F401,F403
from .measure import (FiniteSampleSpace, PointFunction, ProbabilityMeasure,
                      SignedMeasure, expectation, l2_inner, radon_nikodym, tv_norm)
from .model import (ConeProbeReport, DiffeologicalModel, GridSpec, Plot, TangentVector,
                    check_plot, constant_plot, fisher_gram, fisher_metric,
                    integrability_report, plot_point, plot_velocity, tangent_cone_probe)
from .families import (affine_mixture_plot, bernoulli_pair_plot, chessboard,
                       parameter_line, simplex_model, simplex_plot)
from .markov import (MarkovKernel, SufficiencyReport, check_sufficiency, compose_kernels,
                     conditional_for_statistic, deterministic_kernel, monotonicity_gap,
                     permutation_kernel, pullback_function, pushforward_measure,
                     pushforward_model, pushforward_tangent)
from .estimation import (CoordinatePhi, Estimator, FisherGradient, KernelEmbeddingPhi,
                         ParameterPhi, QuadraticForm, TablePhi, bias, check_phi_regular,
                         constant, cramer_rao_gap, fisher_gradient, inverse_fisher_form,
                         mse_form, phi_apply, phi_mean, plug_in, smoothed, variance_form)

__version__ = "0.1.0"

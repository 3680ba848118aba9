"""Inference for theta = mu / nu in a zero-inflated two-component Poisson mixture."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import (DataSet, ExposureGrid, ModelParams, PriorSpec, TabulatedDensity,  # noqa: F401
                    complete_loglik_mixture, complete_loglik_zipm, observed_loglik, validate_params)
from ._stats import IntervalEstimate  # noqa: F401
from .simulate import SimConfig, replicate_stream, simulate_dataset  # noqa: F401
from .observed import (ObservedSplit, ci_theta_arcsine, ci_theta_lognormal,  # noqa: F401
                       conjugate_posterior_observed, integrated_pmf_split, mile, mle_observed,
                       split_from_data)
from ._em import EMFit  # noqa: F401
from .em_mixture import (ci_theta_mixture, estep_mixture, fit_em_mixture,  # noqa: F401
                         init_histogram_mixture, mstep_mixture, observed_info_mixture)
from .em_zipm import (ZipmResponsibilities, ci_theta_zipm, estep_zipm, fit_em_zipm,  # noqa: F401
                      init_histogram_zipm, mstep_zipm, observed_info_zipm)
from .conjugate import (PosteriorPhi, empirical_bayes_mixture, empirical_bayes_zipm,  # noqa: F401
                        phi_credible_interval, phi_logdensity)
from .integrated import (elem_symm_log, integrated_loglik_given_y, integrated_loglik_mixture,  # noqa: F401
                         integrated_loglik_n, integrated_loglik_zn, mcmc_posterior_theta,
                         sufficiency_check)
from .ztp import (conditional_zipm_logpmf, ztp_discrepancy_report, ztp_logpmf,  # noqa: F401
                  ztp_mixture_logpmf)

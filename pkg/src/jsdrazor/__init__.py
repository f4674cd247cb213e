"""Likelihood-free model choice for categorical simulator models.

Scores candidate models with a Jensen-Shannon-divergence analogue of the
Schwarz criterion, computed either exactly from category probabilities or via
GP-driven Bayesian optimization over simulator runs, and ships desk-scale
exact oracles validating the underlying bounds.
"""

__version__ = "0.1.0"

from .categorical import (Categorical, CountVector, empirical_from_counts,
                          log_type_class_size, sample_multinomial)
from .divergence import entropy, jsd, jsd_sqrt, kl, phi_family, total_variation
from .estimate import FitResult, OptimizerSettings, min_jsd_fit, mle_fit
from .model import (ParametricModel, fisher_info, jacobian, jsd_gradient,
                    jsd_hessian, loglinear_model, multilogit_model)
from .razor import (ModelScore, ScoreReport, razor_laplace, refined_penalty,
                    select, sic, sic_jsd)
from .bolfi import (GPSurrogate, LowerConfidenceBound, MaxVariance, Simulator,
                    acquire, bolfi_minimize, discrepancy, gp_fit, sic_bolfi)
from .evidence import PriorSpec, acceptance_rate_limit, model_evidence, razor_bound_check
from .simulators import (NFDSConfig, loglinear_simulator, multilogit_simulator,
                         nfds_simulator, synthetic_cluster_data)

__all__ = [
    "Categorical", "CountVector", "empirical_from_counts", "sample_multinomial",
    "log_type_class_size",
    "kl", "jsd", "jsd_sqrt", "total_variation", "phi_family", "entropy",
    "ParametricModel", "multilogit_model", "loglinear_model", "jacobian",
    "fisher_info", "jsd_gradient", "jsd_hessian",
    "FitResult", "OptimizerSettings", "min_jsd_fit", "mle_fit",
    "ModelScore", "ScoreReport", "sic_jsd", "sic", "refined_penalty",
    "razor_laplace", "select",
    "Simulator", "GPSurrogate", "LowerConfidenceBound", "MaxVariance",
    "discrepancy", "gp_fit", "acquire", "bolfi_minimize", "sic_bolfi",
    "PriorSpec", "model_evidence", "razor_bound_check", "acceptance_rate_limit",
    "NFDSConfig", "multilogit_simulator", "loglinear_simulator", "nfds_simulator",
    "synthetic_cluster_data",
    "__version__",
]

"""Minimax risk classification in high dimensions via LP constraint generation.

The worst-case error probability of a 0-1 minimax risk classifier is the
value of a linear program whose columns correspond to one-hot class features.
This package solves that LP exactly by iterating small subproblems over a
working feature set (constraint generation on the dual), which keeps learning
tractable when the feature count is large and yields feature selection and a
decreasing sequence of worst-case error probabilities as byproducts.
"""

__version__ = "0.1.0"

from mrccg.backend import active_backend, available_backends, get_kernels
from mrccg.cg import CgConfig, CgTrace, IterationRecord, solve_full, train
from mrccg.classifier import (MrcModel, decision_scores, empirical_error,
                              load_model, predict, predict_proba,
                              risk_bound_rhs, sample_labels, save_model)
from mrccg.datasets import (Dataset, ScalerParams, load_csv, standardize,
                            stratified_kfold, synthetic_gaussian)
from mrccg.errors import (CertificateError, DataError, LpError,
                          NumericalError)
from mrccg.featmap import (FeatureMap, InstanceMap, identity_map, phi,
                           phi_dot, psi, rff_fit)
from mrccg.lp import (LpProblem, LpSolution, SimplexSolver, WarmStart,
                      assemble_subproblem, dump_lp, verify_certificates,
                      warm_start_from)
from mrccg.problem import (ConstraintSystem, MomentStats, build_constraints,
                           columns, estimate_moments, ft_alpha)
from mrccg.sparsevec import SparseVector

__all__ = [name for name in dir() if not name.startswith("_")]

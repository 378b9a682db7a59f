"""Exact top Hessian eigenvalues at minima of deep matrix factorization.

The library builds factor chains whose product hits a target matrix,
evaluates the closed-form top eigenvalue of the loss Hessian at any such
minimizer (general Kronecker-sum form plus scalar-chain and depth-2
specializations), verifies it against dense and finite-difference oracles,
reproduces the gradient-descent escape phenomenon around the
``lambda_max = 2 / eta`` stability threshold, and exports 2-D loss-landscape
slices.
"""

from .directional import (blocks_from_flat, fd_hessian_vector, flatten_blocks,
                          gradient, gradient_and_loss, perturb,
                          random_unit_direction, second_directional,
                          unit_direction, zero_direction)
from .dynamics import (EscapeExperimentResult, GDConfig, StabilityVerdict,
                       Trajectory, classify_stability, escape_experiment,
                       gd_run, linearized_run, perturbed_start,
                       trajectory_to_csv)
from .errors import (CertificationError, ConvergenceError, FeasibilityError,
                     ShapeError, SharpfactorError, SizeError, ValidationError)
from .factors import (FactorChain, PartialProducts, instance_from_dict,
                      instance_to_dict, loss, make_minimizer, num_params,
                      partial_products, product, random_dims,
                      rescale_adjacent, validate_dims)
from .hessian_oracle import (DenseHessian, ProductJacobian,
                             dense_hessian_at_minimum, eigen_summary,
                             fd_dense_hessian, load_eigenvectors,
                             product_jacobian, save_eigenvectors)
from .landscape import (ContourGrid, ProjectionBasis, basis_from_json,
                        basis_to_json, contour_grid, fit_ranges, grid_to_csv,
                        hessian_basis, project_trajectory, random_basis)
from .sharpness import (KroneckerSumOperator, SharpnessReport,
                        certify_minimizer, extremal_direction,
                        lambda_max_depth2, lambda_max_general,
                        lambda_max_scalar_chain, spectral_norm,
                        top_singular_triplet)

__version__ = "0.1.0"

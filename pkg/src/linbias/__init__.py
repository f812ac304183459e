"""linbias: gradient flow on linear tensor networks.

Simulates the training dynamics of linear fully-connected, diagonal, and
circular-convolutional networks expressed as multilinear tensor models,
predicts the limit points/directions independently from their closed-form
or variational characterizations, and verifies the two against each other.
"""

from .tensors import (DataTensor, Dataset, TensorNetwork, build_conv_tensor,
                      build_diag_tensor, build_fc_tensor, convolutional_network,
                      custom_network, diagonal_network, direct_forward, forward,
                      fully_connected_network, linear_coefficients,
                      multilinear_mul, singular_residual)
from .decomp import (OrthoDecomposition, conv_decomposition, dft_matrix,
                     diag_decomposition, is_even, project_even,
                     verify_decomposition)
from .flow import FlowConfig, Trajectory, balance_gap, fc_balance, run
from .predictors import (Prediction, conv_small_filter_direction,
                         kkt_residual_maxmargin_2overL, matrix_sensing_limit,
                         maxmargin_l2, min_l1_interpolant, min_l2_interpolant,
                         q_minimizer, singular_direction_verdict,
                         two_layer_margin_direction, two_layer_regression_limit)
from .solvers import SVDResult, svd

__version__ = "0.1.0"

"""Certified subhomogeneous deep-equilibrium layers.

An operator calculus that tracks subhomogeneity degrees through layer
compositions, Thompson-metric contraction verification, globally
convergent fixed-point solvers with implicit-function-theorem gradients,
and feed-forward plus graph-propagation equilibrium architectures whose
fixed points exist, are unique, and are reached at a certified linear
rate.
"""

from ._kernels import backend_name
from .activations import (
    Activation,
    Approxmax,
    Domain,
    HardTanh,
    LeakyRelu,
    PowerScaled,
    Relu,
    ShiftedTanh,
    Sigmoid,
    Softplus,
    SubhomCertificate,
    Tanh,
    act_derivative,
    act_eval,
    act_eval_vec,
    activation_name,
    certificate,
    estimate_degree,
    parse_activation,
    power_scale,
)
from .deq import (
    DEQLayerConfig,
    GradientBundle,
    Layer,
    build_layer,
    finite_difference_gradcheck,
    forward,
    ift_gradient,
    train_toy,
    two_gaussian_dataset,
)
from .graph import (
    Graph,
    GraphPropagationConfig,
    erdos_renyi,
    graph_from_edges,
    linear_closed_form,
    load_edge_list,
    normalized_adjacency,
    propagate,
    softmax_readout,
)
from .metric import (
    ContractionProbeReport,
    NormalizationSpec,
    contraction_probe,
    normalize,
    normalize_columns,
    thompson_distance,
)
from .numerics import RngSpec, log_uniform, pnorm, random_fill, relative_residual
from .operators import (
    AbsLinear,
    Compose,
    Entrywise,
    Linear,
    PlanarCounterexample,
    Power,
    Translation,
    VectorActivation,
    VerificationReport,
    apply,
    certified_degree,
    compose,
    jacobian,
    operator_from_dict,
    subhom_check_at,
    verify_scaling,
    verify_subhom,
)
from .solver import (
    FixedPointReport,
    SolverConfig,
    UniquenessReport,
    rate_estimate,
    solve,
    uniqueness_probe,
)

__version__ = "0.1.0"

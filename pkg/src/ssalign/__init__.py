"""Symmetric optimal-transport alignment of image and text tokens, and
text-derived directional guidance masks."""

from .cdg import (
    BBox,
    Combine,
    Direction,
    DirectionalCue,
    GaussianPriorConfig,
    attention_bbox,
    fuse_guidance,
    gaussian_prior,
    guidance_loss,
    inject_prior,
    normalize_attention,
    parse_directions,
    refine_prediction,
)
from .errors import (
    CapacityError,
    DegenerateInputError,
    InputError,
    OracleError,
    ParameterError,
    ShapeError,
    SSAError,
)
from .features import FeatureSet, Modality, aggregate_global, build_cost_matrix, cost_jacobian_vjp
from .gradients import (
    GradReport,
    finite_diff_check,
    grad_bce,
    grad_infonce,
    grad_local_ot,
    run_gradient_suite,
)
from .linalg import cosine_similarity, logsumexp, softmax_row
from .losses import AlignmentConfig, BatchFeatures, align_loss, bce, infonce_symmetric, local_ot_loss
from .ot import (
    Marginals,
    SinkhornConfig,
    TransportPlan,
    entropic_objective,
    exact_ot_oracle,
    sinkhorn,
    solve_symmetric,
)
from .synth import SynthInstance, SynthSpec, make_aligned_tokens

__version__ = "0.1.0"

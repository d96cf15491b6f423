"""Differentiable view-order and SPD-manifold consistency regularizers."""

from .errors import ViewRegError
from .features import (
    ExtendedDescriptor,
    FeatureMapStack,
    LuminanceWeights,
    build_descriptor,
    collect_patches,
    extended_spd,
    luminance_compress,
    mean_cov,
)
from .schedule import ScheduleConfig, lambda_spd, lambda_svo, total_loss
from .spd import (
    SpdMatrix,
    SymMatrix,
    grad_r_spd,
    lem_distance_sq,
    logm_frechet_adjoint,
    spd_exp,
    spd_log,
    sym_eig,
)
from .view_order import (
    NoiseScheduleCoeffs,
    ViewEmbeddingSequence,
    estimate_clean_latent,
    similarities,
    svo_grad,
    svo_loss,
)

__version__ = "0.1.0"

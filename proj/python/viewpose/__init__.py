"""View-invariant 3D pose representation learning."""

import torch as _torch  # noqa: F401  (loads libtorch before the extension)

from ._core import (  # noqa: F401
    CLIP_LENGTH,
    NUM_MOTION_CLASSES,
    accuracy,
    apply_viewpoint,
    cross_view_invariance,
    encode_pose,
    equivariance_residual,
    euler_to_matrix,
    generate_manifest,
    pixel_shift_to_feature_shift,
    render_figure,
    spearman_rank_correlation,
    train_pretext,
)

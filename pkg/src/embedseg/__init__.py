"""embedseg: unseen-object instance segmentation from pixel embeddings.

Train a small fully convolutional network with a cosine-distance metric loss
so that pixels of one object embed close together on the unit sphere, cluster
the embeddings with von Mises-Fisher mean shift, optionally refine each
segment with a zoomed-in second clustering pass, and score predictions with
Hungarian-matched overlap and boundary P/R/F.
"""

from embedseg.core import (
    CameraIntrinsics,
    RgbdFrame,
    backproject,
    compact_labels,
    cosine_distance,
    normalize_embeddings,
    paint_embeddings,
    spherical_mean,
)
from embedseg.loss import LossConfig, LossValue, SampledBatch, sample_pixels, total_loss_and_grad
from embedseg.meanshift import ClusterResult, MeanShiftConfig, cluster, segment_image
from embedseg.metrics import EvalReport, MatchResult, aggregate, evaluate_masks
from embedseg.network import (
    EmbedderConfig,
    EmbedderModel,
    TrainingDivergedError,
    train,
    train_roi_model,
)
from embedseg.refine import RefineConfig, RoiCrop, crop_roi, refine_all, refine_segment
from embedseg.scenes import SceneSpec, SyntheticScene, generate_scene
from embedseg.vmf import VmfMixtureSpec, labeled_mixture, sample_vmf

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "ClusterResult",
    "EmbedderConfig",
    "EmbedderModel",
    "EvalReport",
    "LossConfig",
    "LossValue",
    "MatchResult",
    "MeanShiftConfig",
    "RefineConfig",
    "RgbdFrame",
    "RoiCrop",
    "SampledBatch",
    "SceneSpec",
    "SyntheticScene",
    "TrainingDivergedError",
    "VmfMixtureSpec",
    "aggregate",
    "backproject",
    "cluster",
    "compact_labels",
    "cosine_distance",
    "crop_roi",
    "evaluate_masks",
    "generate_scene",
    "labeled_mixture",
    "normalize_embeddings",
    "paint_embeddings",
    "refine_all",
    "refine_segment",
    "sample_pixels",
    "sample_vmf",
    "segment_image",
    "spherical_mean",
    "total_loss_and_grad",
    "train",
    "train_roi_model",
]

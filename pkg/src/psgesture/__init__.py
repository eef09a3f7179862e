"""Path-signature features and multi-stream networks for skeleton gestures."""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, load_classifier, save_checkpoint, save_classifier
from .data import (
    DatasetManifest,
    SkeletonSequence,
    augment,
    load_jsonl,
    save_jsonl,
    synth_generate,
)
from .estimator import MultiStreamClassifier
from .features import (
    AohConfig,
    DyadicConfig,
    FeatureBundle,
    PathSignatureFeaturizer,
    SigDepthConfig,
    assemble_features,
    feature_dims,
)
from .net import MultiStreamNet, TrainConfig, count_multadds, dump_first_layer, lr_at, ps_multadds
from .signature import TruncatedSignature, chen_combine, path_signature, segment_signature, sig_dimension
from .transforms import SkeletonPreprocessor, dyadic_subpaths, lead_lag, normalize_skeleton, resample
from .ttm import LocalizationNet, temporal_shift, ttm_backward, ttm_forward

__all__ = [
    "AohConfig",
    "DatasetManifest",
    "DyadicConfig",
    "FeatureBundle",
    "LocalizationNet",
    "MultiStreamClassifier",
    "MultiStreamNet",
    "PathSignatureFeaturizer",
    "SigDepthConfig",
    "SkeletonPreprocessor",
    "SkeletonSequence",
    "TrainConfig",
    "TruncatedSignature",
    "assemble_features",
    "augment",
    "chen_combine",
    "count_multadds",
    "dump_first_layer",
    "dyadic_subpaths",
    "feature_dims",
    "lead_lag",
    "load_checkpoint",
    "load_classifier",
    "load_jsonl",
    "lr_at",
    "normalize_skeleton",
    "path_signature",
    "ps_multadds",
    "resample",
    "save_checkpoint",
    "save_classifier",
    "save_jsonl",
    "segment_signature",
    "sig_dimension",
    "synth_generate",
    "temporal_shift",
    "ttm_backward",
    "ttm_forward",
]

"""Copy-move forgery detection with scaled Harris keypoints and composite LBP/DCT/SVD descriptors."""

__version__ = "0.1.0"

from .config import DescriptorConfig, HarrisConfig, MatcherConfig, PyramidConfig, RunConfig
from .imgio import ForgeryGroundTruth, load_image, perturb, save_image, synth_forgery
from .matcher import DetectionReport, MatchPair, TransformModel, detect

__all__ = [
    "DescriptorConfig",
    "DetectionReport",
    "ForgeryGroundTruth",
    "HarrisConfig",
    "MatchPair",
    "MatcherConfig",
    "PyramidConfig",
    "RunConfig",
    "TransformModel",
    "detect",
    "load_image",
    "perturb",
    "save_image",
    "synth_forgery",
]

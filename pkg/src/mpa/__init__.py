"""Multimodal motion prediction: context-gating encoders, Gaussian-mixture
trajectory heads, trajectory NMS and mAP-style evaluation on synthetic scenes."""

from .augment import mask_history
from .cache import cache_read, cache_write
from .metrics import EvalRecord, average_precision, is_miss, min_ade, min_fde, report
from .objective import log_gaussian_2d, mixture_nll
from .postprocess import nms, nms_probabilities, trajectory_distance
from .predictor import ModelConfig, ModeSet, MotionPredictor, sample_update_mask
from .scene import AgentTrack, AgentType, RoadGraphPolyline, Scene, from_canonical, to_canonical_frame
from .synth import GeneratorConfig, generate_scenes, generate_synthetic_scene

__version__ = "0.1.0"

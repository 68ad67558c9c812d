"""Siamese-sampling temporal grounding, end to end on the CPU.

Locates the video segment described by a sentence, trains with boundary
labels corrected for frame-sampling quantisation, and recovers fractional
boundaries at decode time. Ships its own reverse-mode autodiff over numpy
matrices plus a finite-difference audit of every gradient in the pipeline.
"""

from .autodiff import GradReport, Node, backward, grad_check, leaf
from .config import TrainConfig, preset_config
from .data import GroundingSample, RawSample, SyntheticSpec, synth_dataset
from .metrics import MetricsReport, iou, recall_at
from .model import GroundingNetwork, init_params
from .sampling import (
    BiasReport,
    BoundaryAnnotation,
    BoundaryLabels,
    SamplingPlan,
    bias_report,
    make_plan,
    map_boundary,
    unmap_index,
)
from .training import TrainResult, evaluate, train
from .verify import pipeline_grad_check

__version__ = "0.1.0"

__all__ = [
    "BiasReport",
    "BoundaryAnnotation",
    "BoundaryLabels",
    "GradReport",
    "GroundingNetwork",
    "GroundingSample",
    "MetricsReport",
    "Node",
    "RawSample",
    "SamplingPlan",
    "SyntheticSpec",
    "TrainConfig",
    "TrainResult",
    "backward",
    "bias_report",
    "evaluate",
    "grad_check",
    "init_params",
    "iou",
    "leaf",
    "make_plan",
    "map_boundary",
    "pipeline_grad_check",
    "preset_config",
    "recall_at",
    "synth_dataset",
    "train",
    "unmap_index",
    "__version__",
]

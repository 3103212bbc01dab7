"""RGB-D salient object detection with depth-potentiality gated attention."""
from .config import TrainConfig, load_config
from .depth_potentiality import DepthPotentialityLabel, dp_score, otsu_threshold
from .encoder import BackboneConfig
from .metrics import evaluate_dataset, mae, max_f_measure, pr_curve, s_measure
from .network import DPANet, ModelConfig, NetworkOutput

__version__ = "0.1.0"

__all__ = [
    "BackboneConfig",
    "DPANet",
    "DepthPotentialityLabel",
    "ModelConfig",
    "NetworkOutput",
    "TrainConfig",
    "dp_score",
    "evaluate_dataset",
    "load_config",
    "mae",
    "max_f_measure",
    "otsu_threshold",
    "pr_curve",
    "s_measure",
]

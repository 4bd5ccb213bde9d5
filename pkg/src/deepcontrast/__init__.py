"""Two-stream deep contrast network for salient object detection: multi-scale
fully convolutional stream, segment-wise spatial pooling stream, learned
fusion, dense-CRF refinement, and the standard saliency evaluation protocol.
"""

from .config import RunConfig, load_config
from .crf import CrfParams, mean_field_infer
from .estimator import DeepContrastSaliency
from .metrics import evaluate_dataset, f_measure, mae, max_f_measure
from .model import DeepContrastModel
from .network import BackboneConfig, MsFcn, receptive_field_center
from .superpixels import Segmentation, rgb_to_cielab, segment_image, slic_geodesic
from .training import TrainConfig, alternate_train, balanced_cross_entropy

__all__ = [
    "BackboneConfig", "CrfParams", "DeepContrastModel", "DeepContrastSaliency",
    "MsFcn", "RunConfig", "Segmentation", "TrainConfig", "alternate_train",
    "balanced_cross_entropy", "evaluate_dataset", "f_measure", "load_config",
    "mae", "max_f_measure", "mean_field_infer", "receptive_field_center",
    "rgb_to_cielab", "segment_image", "slic_geodesic",
]

__version__ = "0.1.0"

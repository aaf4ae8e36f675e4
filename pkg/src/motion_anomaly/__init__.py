"""Motion anomaly detection for dash-cam video.

Superpixel orientation and magnitude histograms are scored against online
dictionaries of normal motion and the two anomaly maps are fused with a
Bayesian integration step.
"""
from __future__ import annotations

from .descriptor import MotionFeature, emd_l1, superpixel_histograms
from .dictionary import Dictionary, UpdateBuffer, select_representatives, solve_row_group_lasso, update
from .errors import ConfigError, DataError, EvaluationError, FormatError, StateError
from .evaluation import RocCurve, aggregate, roc
from .fusion import fuse
from .motion_field import FlowField, horn_schunck, read_flo, split_fields, to_gray, write_flo
from .pipeline import Detector, PipelineConfig, parse_config, run_sequence
from .reconstruction import AnomalyMap, magnitude_anomaly, normalize_map, orientation_anomaly, solve_lasso, spatial_near
from .superpixel import SegmentationMap, slic
from .synth import SceneSpec, generate, standard_suite

__version__ = "0.1.0"

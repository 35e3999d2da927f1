"""Foveation-based explanations for image classifiers."""

from .attribution import AttributionMap, build_map, random_cam, render_heatmap
from .config import RunConfig, load_config, parse_config
from .evaluation import EvaluationReport, evaluate_batch, explain
from .foveation import FoveationConfig, FoveationState, coarse, foveate, render_state, update_state
from .predictor import Predictor, build_toy, generate_synthetic, load_weights, save_weights, train_toy
from .scanpath import Scanpath, ScanpathConfig, generate_scanpath

__all__ = [
    "AttributionMap", "build_map", "random_cam", "render_heatmap",
    "RunConfig", "load_config", "parse_config",
    "EvaluationReport", "evaluate_batch", "explain",
    "FoveationConfig", "FoveationState", "coarse", "foveate", "render_state", "update_state",
    "Predictor", "build_toy", "generate_synthetic", "load_weights", "save_weights", "train_toy",
    "Scanpath", "ScanpathConfig", "generate_scanpath",
]

"""Desk-scale dual-stream adapted promptable segmenter for RGB-D camouflaged object detection."""
from .config import Config, ConfigError, load_config, parse_config
from .metrics import MetricsReport, evaluate_pair, evaluate_report
from .model import SamCod
from .objective import dice_ce_loss, fuse_predictions, total_loss

__version__ = "0.1.0"

__all__ = [
    "Config", "ConfigError", "load_config", "parse_config", "MetricsReport", "evaluate_pair",
    "evaluate_report", "SamCod", "dice_ce_loss", "fuse_predictions", "total_loss",
]

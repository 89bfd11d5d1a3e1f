"""Polygon-scanning state-space segmentation toolkit.

Submodules: scan (polygon scan orders, cross scan/merge), ssm (selective
scan), frequency (Haar analysis and frequency features), attention (the
space-frequency attention block), model (UNet assembly, SPSA training,
checkpoints), metrics (confusion metrics, ROC/AUC), data_io (file formats
and synthetic data), report (matplotlib figures), cli (command line).
"""

from . import attention, cli, data_io, frequency, metrics, model, ops, report, scan, ssm

__version__ = "0.1.0"

__all__ = [
    "attention",
    "cli",
    "data_io",
    "frequency",
    "metrics",
    "model",
    "ops",
    "report",
    "scan",
    "ssm",
    "__version__",
]

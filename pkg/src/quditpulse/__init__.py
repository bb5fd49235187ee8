"""Quantum-optimal-control toolkit for shortest-duration transmon qudit gates."""

__version__ = "0.1.0"

from .model import GateSpec, QuditSystem, gate, transmon_system  # noqa: E402
from .pulse import PulseParams, default_params, load_pulse, save_pulse  # noqa: E402
from .dynamics import Trajectory, propagate  # noqa: E402
from .objective import ObjectiveConfig, objective, gradient  # noqa: E402
from .optimize import OptResult, minimize  # noqa: E402
from .ipr import IPRConfig, IPRResult, ipr_run, multi_run  # noqa: E402
from .analysis import FitResult, evaluate_fit, fit  # noqa: E402

__all__ = [
    "__version__",
    "GateSpec", "QuditSystem", "gate", "transmon_system",
    "PulseParams", "default_params", "load_pulse", "save_pulse",
    "Trajectory", "propagate",
    "ObjectiveConfig", "objective", "gradient",
    "OptResult", "minimize",
    "IPRConfig", "IPRResult", "ipr_run", "multi_run",
    "FitResult", "evaluate_fit", "fit",
]

"""Visual relation detection between circuits and tables in electrical drawings."""

from ._threads import apply_thread_cap

apply_thread_cap()

from .checkpoint import Checkpoint, CheckpointFormatError  # noqa: E402
from .config import ModelConfig, preset  # noqa: E402
from .flops import FlopsBreakdown, estimate_flops  # noqa: E402
from .model import ViRED  # noqa: E402
from .tensorcore import Tensor  # noqa: E402

__all__ = [
    "Checkpoint", "CheckpointFormatError", "FlopsBreakdown", "ModelConfig", "Tensor", "ViRED",
    "estimate_flops", "preset",
]
__version__ = "0.1.0"

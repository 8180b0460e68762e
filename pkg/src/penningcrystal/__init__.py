"""Two-dimensional ion crystals in a Penning trap."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import PenningError
from .physcore import (
    CONSTANTS,
    CharacteristicFrequencies,
    CrystalState,
    TrapConfig,
    derive_frequencies,
)

__version__ = "0.1.0"

"""Digital-twin reference stack for an Ackermann-steered toy vehicle.

The package builds up from a typed pub/sub bus and binary codec, through a
virtual hardware layer with drivers and emulators, to a deterministic
kinematics simulator and the compositions of the twin ladder (model, shadow,
twin, prototype), plus calibration experiments, an integration suite, an
HTTP service, and a CLI.
"""

from .config import StackConfig, default_config, load_config, save_config
from .errors import TwinError
from .twin import Composition, CompositionKind, assemble

__version__ = "0.1.0"

__all__ = [
    "Composition",
    "CompositionKind",
    "StackConfig",
    "TwinError",
    "assemble",
    "default_config",
    "load_config",
    "save_config",
    "__version__",
]

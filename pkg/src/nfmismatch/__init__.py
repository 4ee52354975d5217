"""Position-error bounds under near-field model mismatch.

Modules:

- ``config``: scenario dataclass and file format
- ``channel``: array geometry and the far-field / near-field channel variants
- ``observation``: combiners, pilots and noisy observations
- ``bounds``: Fisher information, CRB and the derivative machinery
- ``mcrb``: pseudo-true parameters, misspecified bounds and the MME metric
- ``estimators``: concentrated ML position estimation and Monte Carlo runs
- ``contour``, ``experiments``, ``export``, ``cli``: sweeps, maps and output
"""

from .channel import ChannelParams, ModelKind, StateParams
from .config import ConfigError, ScenarioConfig

__all__ = ["ChannelParams", "ConfigError", "ModelKind", "ScenarioConfig", "StateParams"]
__version__ = "0.1.0"

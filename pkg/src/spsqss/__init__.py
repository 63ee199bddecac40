"""Single-photon-source device-independent quantum secret sharing toolkit.

Analytic key rates, a linear-optics check of the heralded GHZ channel, and a
seeded round-level Monte Carlo of the three-party protocol.
"""

__version__ = "0.1.0"

from spsqss.polarization import (
    GhzLabel,
    MeasurementSetting,
    PureState,
    SETTINGS,
    born_distribution,
    ghz_state,
    observable,
)
from spsqss.noise import NoiseParams, LossPolicy, Strategy, chsh_value, total_qber
from spsqss.keyrate import (
    ChannelConfig,
    KeyRateBreakdown,
    Provider,
    SecrecyProvider,
    devetak_winter,
    practical_rate,
)
from spsqss.montecarlo import SimConfig, SimEstimates, simulate

__all__ = [
    "ChannelConfig",
    "GhzLabel",
    "KeyRateBreakdown",
    "LossPolicy",
    "MeasurementSetting",
    "NoiseParams",
    "Provider",
    "PureState",
    "SETTINGS",
    "SecrecyProvider",
    "SimConfig",
    "SimEstimates",
    "Strategy",
    "born_distribution",
    "chsh_value",
    "devetak_winter",
    "ghz_state",
    "observable",
    "practical_rate",
    "simulate",
    "total_qber",
]

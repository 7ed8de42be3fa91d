"""Device-independent quantum key distribution: simulator and finite-size calculator."""

from .bell import (
    CHSH_SCENARIO,
    BellFunctional,
    BellScenario,
    Behavior,
    RandomnessBound,
    chsh_functional,
    evaluate_functional,
    tau_ns,
    tau_qm,
)
from .devices import honest_pair
from .privacy import key_length
from .protocol import ProtocolParams, run_full_protocol
from .rates import asymptotic_rate, critical_visibility

__all__ = [
    "CHSH_SCENARIO",
    "BellFunctional",
    "BellScenario",
    "Behavior",
    "ProtocolParams",
    "RandomnessBound",
    "asymptotic_rate",
    "chsh_functional",
    "critical_visibility",
    "evaluate_functional",
    "honest_pair",
    "key_length",
    "run_full_protocol",
    "tau_ns",
    "tau_qm",
]

__version__ = "0.1.0"

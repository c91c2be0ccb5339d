"""Remote preparation of a qubit on a circle with one forward bit."""
from .bloch import (
    Frame,
    InvalidStateError,
    TwoQubitState,
    bell_diagonal,
    dakic_state,
    is_entangled,
    make_frame,
    validate_state,
    werner,
)
from .elliptic import elliptic_E
from .optimizer import (
    OptimizationResult,
    minimize_over_beta,
    optimal_G_over_povm,
    optimize_bistochastic_bell_diagonal,
    optimize_invariant,
    separable_optimal_fidelity,
)
from .protocol import ChannelClass, DecodingChannel, DecodingPair, Encoding, average_G

__version__ = "0.1.0"

__all__ = [
    "ChannelClass",
    "DecodingChannel",
    "DecodingPair",
    "Encoding",
    "Frame",
    "InvalidStateError",
    "OptimizationResult",
    "TwoQubitState",
    "average_G",
    "bell_diagonal",
    "dakic_state",
    "elliptic_E",
    "is_entangled",
    "make_frame",
    "minimize_over_beta",
    "optimal_G_over_povm",
    "optimize_bistochastic_bell_diagonal",
    "optimize_invariant",
    "separable_optimal_fidelity",
    "validate_state",
    "werner",
]

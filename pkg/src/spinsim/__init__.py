"""Singlet distillation between two static spins by scattering flying spin-1/2 mediators."""

from .channel import (
    IterationRecord,
    KrausFamily,
    VanishingProbability,
    extract_kraus,
    fixed_points,
    iterate,
    kraus_family,
    polarized_mediator,
    transmit_step,
    unconditioned_step,
    unpolarized_mediator,
)
from .noise import NoiseParams, dephasing_channel, monte_carlo_iterate, noisy_iterate
from .scattering import AmplitudeTable, Model, ScatterParams, SingularSystem, rc_oracle, solve, solve_exchange, solve_raman
from .spin import (
    SpinOperatorSet,
    SpinQuantum,
    exchange_coupling,
    fidelity_with_singlet,
    flipflop_coupling,
    operator_set,
    pair_singlet,
    partial_trace_mediator,
    product_state,
    projector,
    spin_matrices,
    up_down,
)

__version__ = "0.1.0"

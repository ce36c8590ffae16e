"""Dephasing of the static pair between injections.

Each buffer window flips the phase of a spin (Z kick) with probability
``p = (1 - exp(-tb_over_td)) / 2``. With probability ``mu`` both spins share one
kick outcome (collective Z1 Z2), otherwise each spin is kicked independently.
Only the pseudospin case s = 1/2 is supported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PROB_FLOOR, IterationRecord, KrausFamily, VanishingProbability, _check_shapes, _sandwich
from .spin import fidelity_with_singlet, pair_singlet

# diagonal of Z1 and Z2 on the pair basis (down = 0, up = 1, flat index 2 m1 + m2)
_Z1 = np.array([-1.0, -1.0, 1.0, 1.0])
_Z2 = np.array([-1.0, 1.0, -1.0, 1.0])


@dataclass(frozen=True)
class NoiseParams:
    tb_over_td: float = 0.0
    mu: float = 0.0
    trajectories: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.tb_over_td) or self.tb_over_td < 0:
            raise ValueError(f"tb_over_td must be finite and >= 0, got {self.tb_over_td}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")
        if int(self.trajectories) != self.trajectories or self.trajectories < 1:
            raise ValueError(f"trajectories must be a positive integer, got {self.trajectories}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def kick_probability(self) -> float:
        return -np.expm1(-self.tb_over_td) / 2


def _dephase(rho: np.ndarray, diag: np.ndarray, p: float) -> np.ndarray:
    return (1 - p) * rho + p * (diag[:, None] * rho * diag[None, :])


def dephasing_channel(rho12: np.ndarray, p: NoiseParams) -> np.ndarray:
    rho12 = np.asarray(rho12, dtype=complex)
    if rho12.shape[-2:] != (4, 4):
        raise ValueError(f"dephasing is defined for s = 1/2 pairs (4x4), got {rho12.shape}")
    k = p.kick_probability
    collective = _dephase(rho12, _Z1 * _Z2, k)
    independent = _dephase(_dephase(rho12, _Z1, k), _Z2, k)
    return p.mu * collective + (1 - p.mu) * independent


def noisy_iterate(rho12, rho_e, K: KrausFamily, n: int, p: NoiseParams) -> list[IterationRecord]:
    """Alternate one dephasing window and one conditioned scattering step, n times."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rho, rho_e = _check_shapes(rho12, rho_e, K)
    joint = 1.0
    records = []
    for step in range(1, n + 1):
        rho = dephasing_channel(rho, p)
        out = _sandwich(K.T, rho_e, rho)
        p1 = float(np.trace(out).real)
        if p1 <= PROB_FLOOR:
            raise VanishingProbability(f"transmission probability {p1:.3g} at step {step}")
        rho = out / p1
        rho = (rho + rho.conj().T) / 2
        joint *= p1
        records.append(IterationRecord(step, fidelity_with_singlet(rho), joint, rho))
    return records


def trajectory_rng(seed: int, j: int) -> np.random.Generator:
    """Independent stream for trajectory ``j``, derived from ``(seed, j)`` only."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j,)))


def sample_kicks(p: NoiseParams, n: int) -> np.ndarray:
    """Diagonal kick unitaries, shape (trajectories, n, 4) with entries +-1."""
    k = p.kick_probability
    kicks = np.empty((p.trajectories, n, 4))
    for j in range(p.trajectories):
        u = trajectory_rng(p.seed, j).random((n, 3))
        correlated = u[:, 0] < p.mu
        flip_a = u[:, 1] < k
        flip_b = np.where(correlated, flip_a, u[:, 2] < k)
        z1 = np.where(flip_a[:, None], _Z1, 1.0)
        z2 = np.where(flip_b[:, None], _Z2, 1.0)
        kicks[j] = z1 * z2
    return kicks


@dataclass
class MonteCarloEstimate:
    records: list[IterationRecord]
    stderr_F: np.ndarray
    stderr_P: np.ndarray


def monte_carlo_iterate(rho12, rho_e, K: KrausFamily, n: int, p: NoiseParams) -> MonteCarloEstimate:
    """Sampled kick trajectories, each weighted by its cumulative transmission probability.

    ``F`` is the weight-averaged singlet fidelity (a ratio estimator) and ``P`` the
    plain mean of the weights. The returned ``rho12`` is the weighted mean state.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rho, rho_e = _check_shapes(rho12, rho_e, K)
    if rho.shape != (4, 4):
        raise ValueError("Monte Carlo dephasing is defined for s = 1/2 pairs")
    kicks = sample_kicks(p, n)
    m = p.trajectories
    states = np.broadcast_to(rho, (m, 4, 4)).copy()
    weights = np.ones(m)
    v = pair_singlet(1 / 2)
    records = []
    se_f = np.empty(n)
    se_p = np.empty(n)
    for step in range(n):
        z = kicks[:, step]
        states = z[:, :, None] * states * z[:, None, :]
        out = _sandwich(K.T, rho_e, states)
        p1 = np.einsum("zii->z", out).real
        if np.any(p1 <= PROB_FLOOR):
            raise VanishingProbability(f"transmission probability underflow at step {step + 1}")
        states = out / p1[:, None, None]
        weights = weights * p1
        fid = np.einsum("i,zij,j->z", v.conj(), states, v).real
        wsum = weights.sum()
        f_mean = float(weights @ fid / wsum)
        p_mean = float(weights.mean())
        mean_state = np.einsum("z,zij->ij", weights, states) / wsum
        se_f[step] = np.sqrt(np.sum(weights**2 * (fid - f_mean) ** 2)) / wsum
        se_p[step] = weights.std(ddof=1) / np.sqrt(m) if m > 1 else 0.0
        records.append(IterationRecord(step + 1, f_mean, p_mean, mean_state))
    return MonteCarloEstimate(records, se_f, se_p)

"""Transmission-conditioned quantum maps on the static pair.

The mediator is traced out after each scattering event. ``T[m][a]`` and
``R[m][a]`` are the pair-space blocks of the transmission and reflection
matrices for incoming mediator label ``a`` and outgoing label ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scattering import AmplitudeTable, ScatterParams, solve
from .spin import DOWN, UP, as_spin, check_density_matrix, fidelity_with_singlet, partial_trace_mediator

PROB_FLOOR = 1e-14
FIXED_TOL = 1e-9


class VanishingProbability(ArithmeticError):
    """A transmission probability underflowed, so the conditioned state is undefined."""


@dataclass(frozen=True)
class KrausFamily:
    """Arrays of shape (2, 2, D, D) indexed ``[outgoing m_e, incoming m_e]``."""

    T: np.ndarray
    R: np.ndarray

    @property
    def pair_dim(self) -> int:
        return self.T.shape[-1]

    def completeness(self) -> np.ndarray:
        """sum_m (T[m,a]^dag T[m,b] + R[m,a]^dag R[m,b]) as a (2, 2, D, D) array."""
        tt = np.einsum("maji,mbjk->abik", self.T.conj(), self.T)
        rr = np.einsum("maji,mbjk->abik", self.R.conj(), self.R)
        return tt + rr

    def transmission_superoperator(self, rho_e: np.ndarray) -> np.ndarray:
        """Matrix of the unnormalized transmitted map on row-major vec(rho12)."""
        rho_e = np.asarray(rho_e, dtype=complex)
        return np.einsum("ab,maij,mblk->iljk", rho_e, self.T, self.T.conj()).reshape(
            self.pair_dim**2, self.pair_dim**2)


@dataclass
class IterationRecord:
    step: int
    F: float
    P: float
    rho12: np.ndarray


def extract_kraus(table: AmplitudeTable, s) -> KrausFamily:
    """Reshape the N x N amplitude matrices into the 2 x 2 grid of pair-space blocks."""
    s = as_spin(s)
    n = table.t.shape[0]
    if table.t.shape != (s.dim, s.dim) or table.r.shape != (s.dim, s.dim):
        raise ValueError(f"amplitude table of dimension {n} inconsistent with spin {s} (N={s.dim})")
    dd = s.pair_dim

    def blocks(m):
        return np.ascontiguousarray(m.reshape(2, dd, 2, dd).transpose(0, 2, 1, 3))

    return KrausFamily(T=blocks(table.t), R=blocks(table.r))


def kraus_family(model, g: float, q: int = 1, s=0.5, theta: float | None = None) -> KrausFamily:
    """Solve the scattering problem (at resonance order ``q`` unless ``theta`` given)."""
    s = as_spin(s)
    p = ScatterParams.resonant(model, g, q, s) if theta is None else ScatterParams(model, g, theta, s)
    return extract_kraus(solve(p), s)


def polarized_mediator(r_pol: float) -> np.ndarray:
    """[(1 - r)|down><down| + (1 + r)|up><up|] / 2, r in [0, 1]."""
    if not 0.0 <= r_pol <= 1.0:
        raise ValueError(f"polarization must lie in [0, 1], got {r_pol}")
    rho = np.zeros((2, 2), dtype=complex)
    rho[DOWN, DOWN] = (1 - r_pol) / 2
    rho[UP, UP] = (1 + r_pol) / 2
    return rho


def unpolarized_mediator() -> np.ndarray:
    return polarized_mediator(0.0)


def _check_shapes(rho12, rho_e, K: KrausFamily):
    rho12 = np.asarray(rho12, dtype=complex)
    rho_e = np.asarray(rho_e, dtype=complex)
    if rho_e.shape != (2, 2):
        raise ValueError(f"mediator state must be 2x2, got {rho_e.shape}")
    dd = K.pair_dim
    if rho12.shape != (dd, dd):
        raise ValueError(f"pair state must be {dd}x{dd}, got {rho12.shape}")
    return rho12, rho_e


def _sandwich(ops: np.ndarray, rho_e: np.ndarray, rho12: np.ndarray) -> np.ndarray:
    # sum_m sum_ab rho_e[a,b] A[m,a] rho A[m,b]^dag ; rho12 may carry leading batch axes
    return np.einsum("ab,maij,...jk,mblk->...il", rho_e, ops, rho12, ops.conj(), optimize=True)


def transmit_step(rho12, rho_e, K: KrausFamily) -> tuple[np.ndarray, float]:
    """Unnormalized transmitted state and its trace, the transmission probability."""
    rho12, rho_e = _check_shapes(rho12, rho_e, K)
    out = _sandwich(K.T, rho_e, rho12)
    return out, float(np.trace(out).real)


def unconditioned_step(rho12, rho_e, K: KrausFamily) -> np.ndarray:
    """Pair state after one scattering event with no detector: transmitted plus reflected."""
    rho12, rho_e = _check_shapes(rho12, rho_e, K)
    return _sandwich(K.T, rho_e, rho12) + _sandwich(K.R, rho_e, rho12)


def direct_unconditioned_step(table: AmplitudeTable, rho_e, rho12) -> np.ndarray:
    """Scatter the full joint density matrix with the raw N x N amplitudes, then trace the mediator."""
    joint = np.kron(np.asarray(rho_e, dtype=complex), np.asarray(rho12, dtype=complex))
    out = table.t @ joint @ table.t.conj().T + table.r @ joint @ table.r.conj().T
    return partial_trace_mediator(out)


def direct_transmitted(table: AmplitudeTable, rho_e, rho12) -> np.ndarray:
    joint = np.kron(np.asarray(rho_e, dtype=complex), np.asarray(rho12, dtype=complex))
    return partial_trace_mediator(table.t @ joint @ table.t.conj().T)


def iterate(rho12, rho_e, K: KrausFamily, n: int) -> list[IterationRecord]:
    """Apply the conditioned map ``n`` times; P is the joint probability of n transmissions."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rho, rho_e = _check_shapes(rho12, rho_e, K)
    joint = 1.0
    records = []
    for step in range(1, n + 1):
        out, p1 = transmit_step(rho, rho_e, K)
        if p1 <= PROB_FLOOR:
            raise VanishingProbability(f"transmission probability {p1:.3g} at step {step}")
        rho = out / p1
        rho = (rho + rho.conj().T) / 2
        joint *= p1
        records.append(IterationRecord(step, fidelity_with_singlet(rho), joint, rho))
    return records


def joint_probability(rho12, rho_e, K: KrausFamily, n: int) -> list[float]:
    """Tr of the n-fold unnormalized map, evaluated without renormalizing."""
    rho, rho_e = _check_shapes(rho12, rho_e, K)
    probs = []
    for _ in range(n):
        rho = _sandwich(K.T, rho_e, rho)
        probs.append(float(np.trace(rho).real))
    return probs


def fixed_space(K: KrausFamily, rho_e, tol: float = FIXED_TOL) -> list[np.ndarray]:
    """Orthonormal Hermitian basis of {X : E~(X) = X} under the real trace inner product."""
    L = K.transmission_superoperator(rho_e)
    dd = K.pair_dim
    _, sv, vh = np.linalg.svd(L - np.eye(dd * dd))
    null = vh[sv < tol].conj()
    herm = []
    for v in null:
        x = v.reshape(dd, dd)
        herm.append((x + x.conj().T) / 2)
        herm.append((x - x.conj().T) / 2j)
    if not herm:
        return []
    real = np.array([np.concatenate([h.real.ravel(), h.imag.ravel()]) for h in herm])
    _, sv, vh = np.linalg.svd(real, full_matrices=False)
    basis = vh[sv > tol * max(1.0, sv[0])]
    return [(b[:dd * dd] + 1j * b[dd * dd:]).reshape(dd, dd) for b in basis]


def _is_fixed(rho, rho_e, K, tol):
    out, p1 = transmit_step(rho, rho_e, K)
    return abs(p1 - 1) < tol and np.linalg.norm(out - rho) < tol


def fixed_points(K: KrausFamily, rho_e, tol: float = FIXED_TOL) -> list[np.ndarray]:
    """Density matrices left unchanged by the conditioned map with unit transmission probability.

    The fixed space is resolved into states by diagonalizing the projection of a
    fixed, nondegenerate diagonal reference operator onto it; each eigenvector
    (or, failing that, each normalized spectral projector) that is itself fixed
    is returned. When the fixed space is a full matrix algebra on a subspace this
    yields an orthonormal set of pure fixed states spanning that subspace.
    """
    basis = fixed_space(K, rho_e, tol)
    if not basis:
        return []
    dd = K.pair_dim
    ref = np.diag(1.0 + np.arange(dd) + np.sqrt(2) * np.arange(dd) ** 2 / dd)
    proj = sum(np.trace(h @ ref).real * h for h in basis)
    w, v = np.linalg.eigh(proj)
    found = []
    groups = []
    for i in np.argsort(w)[::-1]:
        if w[i] <= tol:
            continue
        if groups and abs(groups[-1][0] - w[i]) < 1e-8:
            groups[-1][1].append(i)
        else:
            groups.append((w[i], [i]))
    for _, idx in groups:
        pure = [np.outer(v[:, i], v[:, i].conj()) for i in idx]
        if len(idx) == 1 and _is_fixed(pure[0], rho_e, K, tol):
            found.append(pure[0])
            continue
        mixed = sum(pure) / len(pure)
        if _is_fixed(mixed, rho_e, K, tol):
            found.append(mixed)
    return [check_density_matrix(rho, dd, atol=1e-9) for rho in found]

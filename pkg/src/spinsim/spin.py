"""Spin operators for one flying spin-1/2 mediator and two static spin-s particles.

Composite basis ordering is fixed: flat index ``m_e * d**2 + m1 * d + m2`` with
``m_e`` in {0: down, 1: up} and static labels ascending, ``m = index - s``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Literal

import numpy as np

ATOL = 1e-12

DOWN, UP = 0, 1


@dataclass(frozen=True)
class SpinQuantum:
    """Spin quantum number stored as ``two_s`` (s = 1/2 -> 1, s = 5/2 -> 5)."""

    two_s: int

    def __post_init__(self):
        if int(self.two_s) != self.two_s or self.two_s < 1:
            raise ValueError(f"two_s must be a positive integer, got {self.two_s!r}")

    @classmethod
    def from_s(cls, s) -> "SpinQuantum":
        two_s = Fraction(s).limit_denominator(2) * 2
        if two_s.denominator != 1 or abs(float(two_s) - 2 * float(s)) > 1e-12:
            raise ValueError(f"spin must be a multiple of 1/2, got {s!r}")
        return cls(int(two_s))

    @property
    def s(self) -> float:
        return self.two_s / 2

    @property
    def d(self) -> int:
        return self.two_s + 1

    @property
    def pair_dim(self) -> int:
        return self.d**2

    @property
    def dim(self) -> int:
        return 2 * self.d**2

    def __str__(self):
        return f"{self.two_s}/2" if self.two_s % 2 else str(self.two_s // 2)


HALF = SpinQuantum(1)


def as_spin(s) -> SpinQuantum:
    if isinstance(s, SpinQuantum):
        return s
    return SpinQuantum.from_s(s)


def flat_index(m_e: int, m1: int, m2: int, s: SpinQuantum) -> int:
    d = s.d
    for label, top in ((m_e, 2), (m1, d), (m2, d)):
        if not 0 <= label < top:
            raise IndexError(f"basis label {label} out of range [0, {top})")
    return m_e * d * d + m1 * d + m2


def basis_labels(flat: int, s: SpinQuantum) -> tuple[int, int, int]:
    d = s.d
    m_e, rest = divmod(flat, d * d)
    m1, m2 = divmod(rest, d)
    return m_e, m1, m2


def spin_matrices(s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (Sx, Sy, Sz) in the standard descending basis |s>, |s-1>, ..., |-s>."""
    s = as_spin(s)
    m = s.s - np.arange(s.d)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1)), Condon-Shortley phases
    sp = np.diag(np.sqrt(s.s * (s.s + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    sm = sp.conj().T
    sx = (sp + sm) / 2
    sy = (sp - sm) / 2j
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def _ascending(ops):
    # flip from descending magnetic order to the ascending composite convention
    return tuple(op[::-1, ::-1] for op in ops)


def _embed(op: np.ndarray, slot: int, dims: tuple[int, int, int]) -> np.ndarray:
    factors = [np.eye(n, dtype=complex) for n in dims]
    factors[slot] = op
    return np.kron(np.kron(factors[0], factors[1]), factors[2])


@dataclass(frozen=True)
class SpinOperatorSet:
    """Spin components of mediator, particle 1 and particle 2 on the full N-dim space."""

    spin: SpinQuantum
    sigma: tuple[np.ndarray, np.ndarray, np.ndarray]
    s1: tuple[np.ndarray, np.ndarray, np.ndarray]
    s2: tuple[np.ndarray, np.ndarray, np.ndarray]

    @classmethod
    def build(cls, s) -> "SpinOperatorSet":
        s = as_spin(s)
        dims = (2, s.d, s.d)
        half = _ascending(spin_matrices(HALF))
        static = _ascending(spin_matrices(s))
        sigma = tuple(_embed(c, 0, dims) for c in half)
        s1 = tuple(_embed(c, 1, dims) for c in static)
        s2 = tuple(_embed(c, 2, dims) for c in static)
        for group in (sigma, s1, s2):
            for c in group:
                c.setflags(write=False)
        return cls(s, sigma, s1, s2)

    @cached_property
    def s12(self) -> tuple[np.ndarray, ...]:
        return tuple(a + b for a, b in zip(self.s1, self.s2))

    @cached_property
    def total(self) -> tuple[np.ndarray, ...]:
        return tuple(a + b for a, b in zip(self.sigma, self.s12))

    @staticmethod
    def raising(ops) -> np.ndarray:
        return ops[0] + 1j * ops[1]

    @staticmethod
    def lowering(ops) -> np.ndarray:
        return ops[0] - 1j * ops[1]

    @staticmethod
    def square(ops) -> np.ndarray:
        return sum(c @ c for c in ops)


def operator_set(s) -> SpinOperatorSet:
    return SpinOperatorSet.build(s)


def exchange_coupling(ops: SpinOperatorSet, which: Literal[1, 2, "both"] = "both") -> np.ndarray:
    """Dimensionless Heisenberg coupling sigma.S1, sigma.S2 or sigma.S12."""
    static = {1: ops.s1, 2: ops.s2, "both": ops.s12}.get(which)
    if static is None:
        raise ValueError(f"which must be 1, 2 or 'both', got {which!r}")
    return sum(a @ b for a, b in zip(ops.sigma, static))


def flipflop_coupling(ops: SpinOperatorSet, which: Literal[1, 2, "both"] = "both") -> np.ndarray:
    """Raman flip-flop operator sigma_- S_+ + sigma_+ S_- with sigma_+ = |up><down|.

    ``which`` selects S_1, S_2 or S_12 for the static ladder operators.
    """
    static = {1: ops.s1, 2: ops.s2, "both": ops.s12}.get(which)
    if static is None:
        raise ValueError(f"which must be 1, 2 or 'both', got {which!r}")
    sig_p = ops.raising(ops.sigma)
    s_p = ops.raising(static)
    q = sig_p.conj().T @ s_p
    return q + q.conj().T


def pair_singlet(s) -> np.ndarray:
    """Total-spin-zero state of the static pair, sum_m (-1)^(s-m) |m,-m> / sqrt(2s+1)."""
    s = as_spin(s)
    d = s.d
    v = np.zeros(d * d, dtype=complex)
    for i1 in range(d):
        i2 = d - 1 - i1  # m2 = -m1
        sign = -1.0 if (s.two_s - i1) % 2 else 1.0  # (-1)^(s - m1)
        v[i1 * d + i2] = sign
    return v / np.sqrt(d)


def pair_operators(s) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...]]:
    """Spin components of particles 1 and 2 on the d**2 pair space (ascending basis)."""
    s = as_spin(s)
    static = _ascending(spin_matrices(s))
    eye = np.eye(s.d)
    return tuple(np.kron(c, eye) for c in static), tuple(np.kron(eye, c) for c in static)


def product_state(m1: int, m2: int, s=HALF) -> np.ndarray:
    """Pair basis vector for labels (m1, m2) in ascending index convention."""
    s = as_spin(s)
    v = np.zeros(s.pair_dim, dtype=complex)
    v[m1 * s.d + m2] = 1.0
    return v


def projector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def up_down(s=HALF) -> np.ndarray:
    """|m1 = +s, m2 = -s><...| (for s = 1/2 the state |up, down>)."""
    s = as_spin(s)
    return projector(product_state(s.d - 1, 0, s))


def check_density_matrix(rho: np.ndarray, dim: int | None = None, *, atol: float = ATOL,
                         psd_tol: float = 1e-10) -> np.ndarray:
    """Validate and return ``rho`` as a complex array; raise ValueError otherwise."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if dim is not None and rho.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {rho.shape[0]}")
    if not np.allclose(rho, rho.conj().T, atol=atol, rtol=0):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > atol:
        raise ValueError(f"density matrix trace {np.trace(rho).real:.3g} != 1")
    if np.linalg.eigvalsh(rho).min() < -psd_tol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def is_density_matrix(rho, dim=None, **kwargs) -> bool:
    try:
        check_density_matrix(rho, dim, **kwargs)
    except ValueError:
        return False
    return True


def partial_trace_mediator(rho: np.ndarray) -> np.ndarray:
    """Trace out the mediator (leading 2-dim factor) of an N x N operator."""
    rho = np.asarray(rho)
    n = rho.shape[0]
    if rho.shape != (n, n) or n % 2:
        raise ValueError(f"expected a square operator of even dimension, got {rho.shape}")
    half = n // 2
    d = round(half**0.5)
    if d * d != half:
        raise ValueError(f"dimension {n} is not 2*d**2")
    return rho[:half, :half] + rho[half:, half:]


def fidelity_with_singlet(rho12: np.ndarray, s=None) -> float:
    rho12 = np.asarray(rho12)
    n = rho12.shape[0]
    d = round(n**0.5)
    if rho12.shape != (n, n) or d * d != n or d < 2:
        raise ValueError(f"expected a d**2 x d**2 pair operator, got {rho12.shape}")
    if s is not None and as_spin(s).pair_dim != n:
        raise ValueError(f"dimension {n} inconsistent with spin {as_spin(s)}")
    v = pair_singlet(SpinQuantum(d - 1))
    return float(np.real(v.conj() @ rho12 @ v))

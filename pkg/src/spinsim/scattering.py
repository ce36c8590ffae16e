"""Stationary multichannel scattering of a spin-1/2 mediator off two point scatterers.

Everything is dimensionless: positions are measured as ``xi = k x`` so the
scatterers sit at ``xi = 0`` and ``xi = theta = k x0``, and ``g`` is the coupling
over velocity. Region I is ``xi < 0``, region II ``0 < xi < theta``, region III
``xi > theta``. Column ``mu'`` of every amplitude matrix belongs to the incoming
channel, row ``nu`` to the outgoing one.

Exchange model (quadratic dispersion)::

    psi'(site+) - psi'(site-) = 2 g V_site psi(site),    V_i = sigma . S_i

Raman model (linear dispersion, right/left movers a, b)::

    a(site+) - a(site-) = -i g Q_site c,   b(site+) - b(site-) = +i g Q_site c,
    c = [a + b](site+) / 2 + [a + b](site-) / 2

with ``Q_i = sigma_- S_i+ + h.c.``. In both models the amplitudes in region III
are written ``t e^{i xi}``, so free propagation gives ``t = 1``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spin import SpinQuantum, as_spin, exchange_coupling, flipflop_coupling, operator_set

COND_LIMIT = 1e12
RC_RTOL = 1e-9


class SingularSystem(ArithmeticError):
    """The matching system is numerically singular at this parameter point."""


class Model(str, enum.Enum):
    EXCHANGE = "exchange"
    RAMAN = "raman"

    @classmethod
    def parse(cls, value) -> "Model":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown model {value!r}; expected 'exchange' or 'raman'") from None


@dataclass(frozen=True)
class ScatterParams:
    model: Model
    g: float
    theta: float
    s: SpinQuantum

    def __post_init__(self):
        object.__setattr__(self, "model", Model.parse(self.model))
        object.__setattr__(self, "s", as_spin(self.s))
        if not np.isfinite(self.g) or self.g < 0:
            raise ValueError(f"g must be finite and >= 0, got {self.g}")
        if not np.isfinite(self.theta) or self.theta <= 0:
            raise ValueError(f"theta must be finite and > 0, got {self.theta}")

    @classmethod
    def resonant(cls, model, g: float, q: int = 1, s=SpinQuantum(1)) -> "ScatterParams":
        if int(q) != q or q < 1:
            raise ValueError(f"q must be a positive integer, got {q}")
        return cls(model, float(g), q * np.pi, s)

    @property
    def resonance_order(self) -> int | None:
        """q if ``theta = q pi`` within relative 1e-9, else None."""
        q = round(self.theta / np.pi)
        if q >= 1 and abs(self.theta - q * np.pi) <= RC_RTOL * self.theta:
            return q
        return None

    @property
    def at_resonance(self) -> bool:
        return self.resonance_order is not None


@dataclass(frozen=True)
class AmplitudeTable:
    """Transmission ``t``, reflection ``r`` and region-II coefficients ``a``, ``b``.

    For the Raman model ``a``/``b`` are the right/left-moving amplitudes; for the
    exchange model they are the e^{+i xi}/e^{-i xi} coefficients.
    """

    t: np.ndarray
    r: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def dim(self) -> int:
        return self.t.shape[0]

    def flux(self) -> np.ndarray:
        """Total outgoing probability per incoming channel."""
        return (np.abs(self.t) ** 2 + np.abs(self.r) ** 2).sum(axis=0)

    def smatrix(self) -> np.ndarray:
        return np.vstack([self.t, self.r])


@lru_cache(maxsize=None)
def _site_operators(model: Model, s: SpinQuantum) -> tuple[np.ndarray, np.ndarray]:
    ops = operator_set(s)
    coupling = exchange_coupling if model is Model.EXCHANGE else flipflop_coupling
    v1, v2 = coupling(ops, 1), coupling(ops, 2)
    v1.setflags(write=False)
    v2.setflags(write=False)
    return v1, v2


def coupling_operator(model, s) -> np.ndarray:
    """Merged internal operator sigma.S12 (exchange) or the flip-flop Q (Raman)."""
    v1, v2 = _site_operators(Model.parse(model), as_spin(s))
    return v1 + v2


def _solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystem(f"matching matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    return np.linalg.solve(m, rhs)


def _split(x: np.ndarray, n: int) -> AmplitudeTable:
    r, a, b, t = (x[i * n:(i + 1) * n] for i in range(4))
    return AmplitudeTable(t=t, r=r, a=a, b=b)


def solve_exchange(p: ScatterParams) -> AmplitudeTable:
    """Amplitude table for the quadratic-dispersion exchange model."""
    if p.model is not Model.EXCHANGE:
        raise ValueError("solve_exchange requires model=exchange")
    v1, v2 = _site_operators(Model.EXCHANGE, p.s)
    n = v1.shape[0]
    eye = np.eye(n)
    zero = np.zeros((n, n))
    e_p, e_m = np.exp(1j * p.theta), np.exp(-1j * p.theta)
    g = p.g
    # unknown ordering: r, A, B, t
    m = np.block([
        # continuity at 0: 1 + r = A + B
        [eye, -eye, -eye, zero],
        # jump at 0: i(A - B) - i(1 - r) = 2g V1 (A + B)
        [1j * eye, 1j * eye - 2 * g * v1, -1j * eye - 2 * g * v1, zero],
        # continuity at theta: A e^{i th} + B e^{-i th} = t e^{i th}
        [zero, e_p * eye, e_m * eye, -e_p * eye],
        # jump at theta: i t e^{i th} - i(A e^{i th} - B e^{-i th}) = 2g V2 t e^{i th}
        [zero, -1j * e_p * eye, 1j * e_m * eye, e_p * (1j * eye - 2 * g * v2)],
    ])
    rhs = np.vstack([-eye, 1j * eye, zero, zero]).astype(complex)
    return _split(_solve(m, rhs), n)


def solve_raman(p: ScatterParams) -> AmplitudeTable:
    """Amplitude table for the linear-dispersion Raman (flip-flop) model."""
    if p.model is not Model.RAMAN:
        raise ValueError("solve_raman requires model=raman")
    q1, q2 = _site_operators(Model.RAMAN, p.s)
    n = q1.shape[0]
    eye = np.eye(n)
    zero = np.zeros((n, n))
    e_p, e_m = np.exp(1j * p.theta), np.exp(-1j * p.theta)
    h1 = 0.5j * p.g * q1
    h2 = 0.5j * p.g * q2
    # site 1, incoming a- = 1, b- = r, outgoing a+ = A, b+ = B; c = (1 + r + A + B)/2
    #   A - 1 = -i g Q1 c ,  B - r = +i g Q1 c
    # site 2, a- = A e^{i th}, b- = B e^{-i th}, a+ = t e^{i th}, b+ = 0
    m = np.block([
        [h1, eye + h1, h1, zero],
        [-eye - h1, -h1, eye - h1, zero],
        [zero, e_p * (-eye + h2), e_m * h2, e_p * (eye + h2)],
        [zero, -e_p * h2, e_m * (-eye - h2), -e_p * h2],
    ])
    rhs = np.vstack([eye - h1, h1, zero, zero]).astype(complex)
    return _split(_solve(m, rhs), n)


def solve(p: ScatterParams) -> AmplitudeTable:
    return solve_exchange(p) if p.model is Model.EXCHANGE else solve_raman(p)


def rc_oracle(coupling_op: np.ndarray, g: float) -> AmplitudeTable:
    """Closed-form amplitudes of a single merged point scatterer.

    In each eigenchannel of ``coupling_op`` with eigenvalue kappa,
    ``t = 1 / (1 + i g kappa)`` and ``r = -i g kappa / (1 + i g kappa)``.
    The region-II coefficients are those of the merged scatterer (``a = t``,
    ``b = 0``); they carry no information about the two-site interior.
    """
    coupling_op = np.asarray(coupling_op, dtype=complex)
    if not np.allclose(coupling_op, coupling_op.conj().T, atol=1e-12):
        raise ValueError("coupling operator must be Hermitian")
    kappa, u = np.linalg.eigh(coupling_op)
    denom = 1 + 1j * g * kappa
    t = (u / denom) @ u.conj().T
    r = (u * (-1j * g * kappa / denom)) @ u.conj().T
    return AmplitudeTable(t=t, r=r, a=t.copy(), b=np.zeros_like(t))


def scalar_delta_amplitudes(g: float, kappa: float) -> tuple[complex, complex]:
    """Brute-force 2x2 matching for a scalar delta of dimensionless strength ``2 g kappa``.

    Solves ``1 + r = t`` and ``i t - i (1 - r) = 2 g kappa t`` directly.
    """
    m = np.array([[1.0, -1.0], [1j, 1j - 2 * g * kappa]], dtype=complex)
    r, t = np.linalg.solve(m, np.array([-1.0, 1j], dtype=complex))
    return t, r


def stationary_wavefunction(p: ScatterParams, table: AmplitudeTable, mu_in: int, x: float) -> np.ndarray:
    """Spinor of the stationary state with incoming channel ``mu_in`` at ``xi = x``.

    ``x`` is in units of 1/k. For the Raman model the returned value is the total
    field (right plus left mover), which is continuous at the scatterers.
    """
    n = table.dim
    if not 0 <= mu_in < n:
        raise IndexError(f"incoming channel {mu_in} out of range [0, {n})")
    ep, em = np.exp(1j * x), np.exp(-1j * x)
    if x < 0:
        inc = np.zeros(n, dtype=complex)
        inc[mu_in] = 1.0
        return inc * ep + table.r[:, mu_in] * em
    if x <= p.theta:
        return table.a[:, mu_in] * ep + table.b[:, mu_in] * em
    return table.t[:, mu_in] * ep


def wavefunction_matrix(p: ScatterParams, table: AmplitudeTable, x: float) -> np.ndarray:
    """Columns are the spinors of every incoming channel at ``xi = x``."""
    return np.column_stack([stationary_wavefunction(p, table, mu, x) for mu in range(table.dim)])


def delta_matrix(p: ScatterParams, table: AmplitudeTable, x: float) -> np.ndarray:
    """Matrix of delta(x - x') in the stationary basis, M_{mu'', mu'} = sum_mu conj(Psi) Psi."""
    w = wavefunction_matrix(p, table, x)
    return w.conj().T @ w

"""Quick invariant checks run by ``spinsim selftest``."""

from __future__ import annotations

import numpy as np

from . import channel, noise, scattering, spin


def _spin_algebra():
    worst = 0.0
    for two_s in (1, 2, 5):
        ops = spin.operator_set(spin.SpinQuantum(two_s))
        for group in (ops.sigma, ops.s1, ops.s2):
            x, y, z = group
            worst = max(worst, np.abs(x @ y - y @ x - 1j * z).max())
        h = spin.exchange_coupling(ops)
        for cons in (ops.square(ops.total), ops.total[2], ops.square(ops.s12)):
            worst = max(worst, np.abs(h @ cons - cons @ h).max())
    return worst < 1e-12, f"max commutator residual {worst:.2e}"


def _oracle():
    rng = np.random.default_rng(1)
    worst = 0.0
    for model in scattering.Model:
        for two_s in (1, 2, 5):
            s = spin.SpinQuantum(two_s)
            g, q = rng.uniform(0.1, 10), int(rng.integers(1, 4))
            tab = scattering.solve(scattering.ScatterParams.resonant(model, g, q, s))
            ref = scattering.rc_oracle(scattering.coupling_operator(model, s), g)
            worst = max(worst, np.abs(tab.t - ref.t).max(), np.abs(tab.r - ref.r).max())
    return worst < 1e-9, f"max |solver - closed form| {worst:.2e}"


def _flux():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        for model in scattering.Model:
            p = scattering.ScatterParams(model, rng.uniform(0, 10), rng.uniform(0.1, 10), spin.HALF)
            worst = max(worst, np.abs(scattering.solve(p).flux() - 1).max())
    return worst < 1e-10, f"max flux error {worst:.2e}"


def _singlet_fixed():
    rng = np.random.default_rng(3)
    singlet = spin.projector(spin.pair_singlet(spin.HALF))
    worst = 0.0
    for model in scattering.Model:
        for _ in range(5):
            K = channel.kraus_family(model, rng.uniform(0.01, 10), int(rng.integers(1, 4)))
            out, p1 = channel.transmit_step(singlet, channel.polarized_mediator(rng.uniform()), K)
            worst = max(worst, np.linalg.norm(out - singlet), abs(p1 - 1))
    return worst < 1e-12, f"max deviation {worst:.2e}"


def _anchors():
    K = channel.kraus_family("exchange", 1.6)
    a = channel.iterate(spin.up_down(), channel.unpolarized_mediator(), K, 5)[-1]
    b = channel.iterate(spin.up_down(), channel.unpolarized_mediator(), channel.kraus_family("exchange", 7.5), 1)[-1]
    ok = a.F >= 0.95 and a.P >= 0.5 and b.F >= 0.95 and b.P >= 0.5
    return ok, f"g=1.6 n=5: F={a.F:.4f} P={a.P:.4f}; g=7.5 n=1: F={b.F:.4f} P={b.P:.4f}"


def _kraus_direct():
    rng = np.random.default_rng(4)
    s = spin.HALF
    table = scattering.solve(scattering.ScatterParams("exchange", 1.3, 2.1, s))
    K = channel.extract_kraus(table, s)
    worst = 0.0
    for _ in range(5):
        x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = x @ x.conj().T
        rho /= np.trace(rho)
        rho_e = channel.polarized_mediator(rng.uniform())
        worst = max(worst, np.abs(channel.unconditioned_step(rho, rho_e, K)
                                  - channel.direct_unconditioned_step(table, rho_e, rho)).max())
    return worst < 1e-10, f"max |Kraus - direct| {worst:.2e}"


def _noise_immunity():
    K = channel.kraus_family("raman", 1.5)
    base = channel.iterate(spin.up_down(), channel.unpolarized_mediator(), K, 5)
    worst = 0.0
    for tb in (0.1, 0.5, 1.0):
        recs = noise.noisy_iterate(spin.up_down(), channel.unpolarized_mediator(), K, 5, noise.NoiseParams(tb, 1.0))
        worst = max(worst, max(abs(a.F - b.F) for a, b in zip(recs, base)))
    return worst < 1e-10, f"max |F(mu=1) - F(noiseless)| {worst:.2e}"


CHECKS = [
    ("spin algebra and conservation laws", _spin_algebra),
    ("solver matches merged-scatterer closed form", _oracle),
    ("flux conservation off resonance", _flux),
    ("singlet is a transparent fixed point", _singlet_fixed),
    ("anchor points g=1.6 and g=7.5", _anchors),
    ("Kraus map equals direct joint evolution", _kraus_direct),
    ("collective dephasing leaves fidelity unchanged", _noise_immunity),
]


def run(echo=print) -> bool:
    passed = True
    for name, check in CHECKS:
        ok, detail = check()
        passed &= bool(ok)
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return passed

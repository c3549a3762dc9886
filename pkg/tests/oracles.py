"""Independent reference computations used only by the tests."""

from __future__ import annotations

import cmath
import math

import mpmath
import numpy as np


def binary_entropy_mp(x, dps: int = 50) -> float:
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        if x in (0, 1):
            return 0.0
        return float(-x * mpmath.log(x, 2) - (1 - x) * mpmath.log(1 - x, 2))


def fock_overlap(alpha: complex, beta: complex, n_max: int = 40) -> complex:
    """<beta|alpha> summed over the truncated photon-number basis."""
    total = 0j
    for n in range(n_max + 1):
        log_norm = -0.5 * math.lgamma(n + 1)
        ca = cmath.exp(-abs(alpha) ** 2 / 2) * alpha**n * math.exp(log_norm)
        cb = cmath.exp(-abs(beta) ** 2 / 2) * beta**n * math.exp(log_norm)
        total += cb.conjugate() * ca
    return total


def three_slot_interferometer(a1: complex, a2: complex, arm_phase: float = 0.0, insertion: float = 1.0):
    """
    Propagate a pulse pair through a 50/50 coupler, a short arm and a long arm
    (delay = one slot, extra phase ``arm_phase``), and a second 50/50 coupler.

    Coupler convention: out = [[1, i], [i, 1]] / sqrt(2) @ in.
    Returns ``{port: [slot0, slot1, slot2]}`` mean photon numbers; port "det"
    is the one that is dark for equal input phases.
    """
    s = math.sqrt(insertion)
    inputs = [a1 * s, a2 * s, 0j]  # by time slot
    short = [x / math.sqrt(2) for x in inputs]
    long_ = [1j * x / math.sqrt(2) for x in inputs]
    long_delayed = [0j] + [x * cmath.exp(1j * arm_phase) for x in long_[:2]]
    det = [(sa + 1j * la) / math.sqrt(2) for sa, la in zip(short, long_delayed)]
    other = [(1j * sa + la) / math.sqrt(2) for sa, la in zip(short, long_delayed)]
    return {"det": [abs(x) ** 2 for x in det], "other": [abs(x) ** 2 for x in other]}


def middle_slot_with_visibility(a1: complex, a2: complex, visibility: float, static_phase: float, insertion: float) -> float:
    """Finite visibility as a two-point average over arm phase noise +-delta, cos(delta) = V."""
    delta = math.acos(visibility)
    vals = [
        three_slot_interferometer(a1, a2, arm_phase=-static_phase + sgn * delta, insertion=insertion)["det"][1]
        for sgn in (-1, 1)
    ]
    return sum(vals) / 2


def monte_carlo_click(mean_photons: float, efficiency: float, dark_prob: float, trials: int, seed: int = 7) -> tuple[float, float]:
    """Click frequency from photon-number sampling: Poisson photons, binomial detection, dark counts."""
    rng = np.random.default_rng(seed)
    photons = rng.poisson(mean_photons, trials)
    detected = rng.binomial(photons, efficiency)
    dark = rng.random(trials) < dark_prob
    clicks = np.count_nonzero((detected > 0) | dark)
    p = clicks / trials
    return p, math.sqrt(max(p * (1 - p), 1e-300) / trials)


def usd_attack_branches(mu_recv: float, phi: float, eff: float, dark: float, visibility: float, mu_eve: float, policy: str, p_forward: float = 0.5):
    """
    Enumerate (b_A, b_B) x {USD success, failure} x {forward, block first}
    for the intercept-resend attack. Returns (click prob per cycle, error
    prob per cycle). Only the middle-slot formula of the detector is shared
    with the library; the branch logic is written out independently.
    """
    eps = math.exp(-2 * mu_eve * math.sin(phi / 2) ** 2)
    forward_p = {"always_forward_first": 1.0, "always_block_first": 0.0, "randomized": p_forward}[policy]
    amp = math.sqrt(mu_recv)
    clicks = errors = 0.0
    for b_a in (0, 1):
        for b_b in (0, 1):
            for success, p_s in ((True, 1 - eps), (False, eps)):
                for fwd, p_f in ((True, forward_p), (False, 1 - forward_p)):
                    w = 0.25 * p_s * p_f
                    if w == 0:
                        continue
                    ref = amp * cmath.exp(1j * phi * b_b) if fwd else 0j
                    data = amp * cmath.exp(1j * phi * b_a) if success else 0j
                    n1, n2 = abs(ref) ** 2, abs(data) ** 2
                    cross = (ref.conjugate() * data).real
                    mean = max(0.0, (n1 + n2) / 4 - visibility / 2 * cross)
                    pc = 1 - (1 - dark) * math.exp(-eff * mean)
                    clicks += w * pc
                    if b_a == b_b:
                        errors += w * pc
    return clicks, errors

"""
Alice/Bob protocol loop, timing verification, sifting and calibration.

One clock cycle: Bob emits a classical pulse at the early or late position
of the slot, his delay interferometer turns it into a reference/data pair,
Alice attenuates both pulses to ``mu`` photons, shifts the data pulse by
``phi * b_A`` and sends the pair back. Bob shifts the reference by
``phi * b_B`` and watches the middle slot of the destructive port at the
scheduled time. A click means ``b_A != b_B`` in the ideal device, so Bob
records ``1 - b_B`` and Alice ``b_A``.

The attack-free path is fully vectorised; attacked runs go through the
per-cycle engine in :mod:`relqkd.adversary`, which shares the amplitude,
randomness and report helpers defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, Literal

import numpy as np

from relqkd.core_math import KeyRateInputs, SignalAlphabet, holevo_bound, secret_key_rate
from relqkd.errors import CalibrationError, ConfigError
from relqkd.photonics import (
    DetectorModel,
    InterferometerModel,
    click_probability,
    db_to_transmittance,
    middle_slot_mean_photons_array,
)
from relqkd.prng import LfsrState, generate_bits, make_synchronized_pair
from relqkd.spacetime import ChannelGeometry, one_way_time

if TYPE_CHECKING:
    from relqkd.adversary import AttackOutcome, Strategy

__all__ = [
    "TimingSequence",
    "SeriesSeeds",
    "SeriesConfig",
    "SeriesReport",
    "demo_config",
    "generate_timing_sequence",
    "verify_timing",
    "reconstruct_timing",
    "run_series",
    "expected_click_probability",
    "expected_qber",
    "calibrate_loss",
    "calibrate_visibility",
    "calibrate",
]

DEMO_CHANNEL_TRANSMITTANCE = db_to_transmittance(3.0)


@dataclass
class TimingSequence:
    """Early (0) / late (1) choices, one per clock cycle.

    ``invalid`` flags cycles whose arrival could not be assigned to either
    grid position; they always count as timing errors.
    """

    choices: np.ndarray
    t0: float
    late_offset: float
    invalid: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.choices = np.asarray(self.choices, dtype=np.uint8)
        if self.invalid is None:
            self.invalid = np.zeros(len(self.choices), dtype=bool)
        else:
            self.invalid = np.asarray(self.invalid, dtype=bool)

    def __len__(self) -> int:
        return len(self.choices)

    def emission_times(self) -> np.ndarray:
        k = np.arange(len(self.choices), dtype=float)
        return k * self.t0 + self.choices * self.late_offset


@dataclass(frozen=True)
class SeriesSeeds:
    """Seeds for one series.

    ``alice``, ``bob`` and ``timing`` are nonzero 20-bit LFSR seeds;
    ``noise`` seeds the numpy stream used for photodetection, jitter,
    Alice's clock offset and Eve's private randomness.
    """

    alice: int = 0x1
    bob: int = 0x2
    timing: int = 0x3
    noise: int = 0

    @classmethod
    def derive(cls, base_seed: int, index: int) -> "SeriesSeeds":
        """Independent, reproducible seeds for series ``index`` of a run."""
        words = np.random.SeedSequence([int(base_seed), int(index)]).generate_state(4, dtype=np.uint32)
        lfsr = [int(w) % ((1 << 20) - 1) + 1 for w in words[:3]]
        return cls(lfsr[0], lfsr[1], lfsr[2], int(words[3]))


@dataclass(frozen=True)
class SeriesConfig:
    n_pulses: int = 32768
    alphabet: SignalAlphabet = field(default_factory=lambda: SignalAlphabet.from_degrees(0.1, 130.0))
    geometry: ChannelGeometry = field(default_factory=ChannelGeometry)
    interferometer: InterferometerModel = field(default_factory=InterferometerModel)
    detector: DetectorModel = field(default_factory=DetectorModel)
    channel_transmittance_one_way: float = DEMO_CHANNEL_TRANSMITTANCE
    extra_system_transmittance: float = 1.0
    seeds: SeriesSeeds = field(default_factory=SeriesSeeds)
    randomness: Literal["lfsr", "external"] = "lfsr"
    sifting: Literal["prng", "announce"] = "prng"
    qber_sample_fraction: float | None = None
    timing_jitter: float = 0.0  # s, rms of Alice's arrival-time measurement

    def validate(self) -> None:
        problems: list[str] = []
        if self.n_pulses < 1:
            problems.append("n_pulses must be >= 1")
        for name in ("channel_transmittance_one_way", "extra_system_transmittance"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if self.randomness not in ("lfsr", "external"):
            problems.append(f"unknown randomness mode {self.randomness!r}")
        if self.sifting not in ("prng", "announce"):
            problems.append(f"unknown sifting mode {self.sifting!r}")
        if self.randomness == "external" and self.sifting == "prng":
            problems.append("prng sifting needs lfsr randomness")
        if self.qber_sample_fraction is not None and not 0 < self.qber_sample_fraction <= 1:
            problems.append("qber_sample_fraction must lie in (0, 1]")
        if self.timing_jitter < 0:
            problems.append("timing_jitter must be >= 0")
        from relqkd.spacetime import validate_geometry

        problems.extend(validate_geometry(self.geometry))
        if problems:
            raise ConfigError("; ".join(problems))


def demo_config(**overrides: Any) -> SeriesConfig:
    """Series configuration with the demonstration's published parameters."""
    return replace(SeriesConfig(), **overrides)


@dataclass
class SeriesReport:
    n_pulses: int
    clicks: int
    sifted_alice_bits: list[int]
    sifted_bob_bits: list[int]
    qber: float
    eta_timing: float
    holevo: float
    key_rate: float
    secret_bits_estimate: int
    timing_ok: bool
    seeds: SeriesSeeds | None = None
    attack: "AttackOutcome | None" = None

    def to_dict(self) -> dict[str, Any]:
        d = {
            "n_pulses": self.n_pulses,
            "clicks": self.clicks,
            "qber": self.qber,
            "eta_timing": self.eta_timing,
            "holevo": self.holevo,
            "key_rate": self.key_rate,
            "secret_bits_estimate": self.secret_bits_estimate,
            "timing_ok": self.timing_ok,
            "sifted_alice_bits": self.sifted_alice_bits,
            "sifted_bob_bits": self.sifted_bob_bits,
        }
        if self.seeds is not None:
            d["seeds"] = {
                "alice": self.seeds.alice,
                "bob": self.seeds.bob,
                "timing": self.seeds.timing,
                "noise": self.seeds.noise,
            }
        if self.attack is not None:
            d["attack"] = self.attack.to_dict()
        return d


# ---------------------------------------------------------------------------
# timing


def generate_timing_sequence(n: int, rng: LfsrState | np.random.Generator, geometry: ChannelGeometry | None = None) -> TimingSequence:
    """Bob's early/late schedule for ``n`` cycles from an LFSR or numpy stream."""
    if n < 1:
        raise ValueError("timing sequence needs at least one cycle")
    g = geometry or ChannelGeometry()
    if isinstance(rng, LfsrState):
        bits, _ = generate_bits(rng, n)
    else:
        bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    return TimingSequence(bits, g.clock_period, g.late_offset)


def verify_timing(bob: TimingSequence, alice_observed: TimingSequence) -> tuple[float, bool]:
    """Fraction of cycles where Alice's view differs from Bob's schedule."""
    if len(bob) != len(alice_observed):
        raise ValueError(f"timing length mismatch: {len(bob)} vs {len(alice_observed)}")
    wrong = (bob.choices != alice_observed.choices) | alice_observed.invalid
    eta = float(np.count_nonzero(wrong)) / len(bob)
    return eta, eta == 0.0


def reconstruct_timing(arrivals, g: ChannelGeometry) -> TimingSequence:
    """
    Recover the early/late pattern from Alice's local arrival timestamps.

    Arrival ``i`` belongs to cycle ``i``. The grid is anchored on the first
    arrival, which is either early or late; both hypotheses are scored and
    the one with fewer unclassifiable arrivals wins (ties go to "early").
    A constant clock offset cancels out. A pattern that is globally constant
    is inherently ambiguous under an unknown offset and resolves to early.
    """
    a = np.asarray(arrivals, dtype=float)
    n = len(a)
    if n == 0:
        raise ValueError("no arrivals")
    t0, late = g.clock_period, g.late_offset
    resid = (a - a[0]) - np.arange(n, dtype=float) * t0
    best = None
    for first_late in (0, 1):
        r = resid + first_late * late
        d_early = np.abs(r)
        d_late = np.abs(r - late)
        choices = (d_late < d_early).astype(np.uint8)
        invalid = np.minimum(d_early, d_late) > late / 2.0
        n_bad = int(np.count_nonzero(invalid))
        if best is None or n_bad < best[0]:
            best = (n_bad, choices, invalid)
    return TimingSequence(best[1], t0, late, best[2])


# ---------------------------------------------------------------------------
# shared per-series machinery (also used by the attack engine)


@dataclass
class SeriesRandomness:
    bits_alice: np.ndarray
    bits_bob: np.ndarray
    timing: TimingSequence
    uniforms: np.ndarray  # photodetection draws, one per cycle
    clock_offset: float
    jitter: np.ndarray
    rng: np.random.Generator  # remaining stream: sampling disclosure, Eve


def draw_randomness(cfg: SeriesConfig) -> SeriesRandomness:
    n = cfg.n_pulses
    s = cfg.seeds
    rng = np.random.default_rng(s.noise)
    if cfg.randomness == "lfsr":
        alice_state, _bob_copy = make_synchronized_pair(s.alice)
        bits_a, _ = generate_bits(alice_state, n)
        bits_b, _ = generate_bits(LfsrState(s.bob), n)
        timing = generate_timing_sequence(n, LfsrState(s.timing), cfg.geometry)
    else:
        bits_a = rng.integers(0, 2, size=n, dtype=np.uint8)
        bits_b = rng.integers(0, 2, size=n, dtype=np.uint8)
        timing = generate_timing_sequence(n, rng, cfg.geometry)
    uniforms = rng.random(n)
    clock_offset = float(rng.uniform(0.0, 1e3))
    jitter = rng.normal(0.0, cfg.timing_jitter, n) if cfg.timing_jitter > 0 else np.zeros(n)
    return SeriesRandomness(bits_a, bits_b, timing, uniforms, clock_offset, jitter, rng)


def alice_amplitudes(alphabet: SignalAlphabet, bits_a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference and data amplitudes leaving Alice's station."""
    alpha = alphabet.amplitude
    ref = np.full(len(bits_a), alpha, dtype=np.complex128)
    data = alpha * np.exp(1j * alphabet.phi * bits_a.astype(float))
    return ref, data


def bob_phase_factors(alphabet: SignalAlphabet, bits_b: np.ndarray) -> np.ndarray:
    return np.exp(1j * alphabet.phi * bits_b.astype(float))


def link_transmittances(cfg: SeriesConfig, eve_position: float | None = None) -> tuple[float, float]:
    """Transmittance Alice->Eve and Eve->Bob detector, the latter including apparatus loss.

    Channel loss in dB is spread uniformly along the path.
    """
    g = cfg.geometry
    x = g.distance if eve_position is None else eve_position
    frac_ae = (g.distance - x) / g.distance
    t = cfg.channel_transmittance_one_way
    t_ae = t ** frac_ae if t > 0 else (1.0 if frac_ae == 0 else 0.0)
    t_eb = t ** (1.0 - frac_ae) if t > 0 else (1.0 if frac_ae == 1 else 0.0)
    return t_ae, t_eb * cfg.extra_system_transmittance


def alice_arrivals(cfg: SeriesConfig, rnd: SeriesRandomness, emission: np.ndarray | None = None) -> np.ndarray:
    """Local timestamps of Bob's pulses at Alice, including her clock offset."""
    if emission is None:
        emission = rnd.timing.emission_times()
    return emission + one_way_time(cfg.geometry) + rnd.clock_offset + rnd.jitter


def sample_clicks(cfg: SeriesConfig, rnd: SeriesRandomness, long_amp, short_amp) -> np.ndarray:
    """Click mask from the long-arm and short-arm fields in Bob's window."""
    mean = middle_slot_mean_photons_array(long_amp, short_amp, cfg.interferometer)
    return rnd.uniforms < click_probability(mean, cfg.detector)


def compile_report(
    cfg: SeriesConfig,
    rnd: SeriesRandomness,
    clicked: np.ndarray,
    arrivals: np.ndarray,
    attack: "AttackOutcome | None" = None,
) -> SeriesReport:
    """Sift, estimate QBER, check timing and assemble the report."""
    idx = np.flatnonzero(clicked)

    bob_bits = (1 - rnd.bits_bob[idx]).astype(np.uint8)
    if cfg.sifting == "prng":
        # Bob regenerates Alice's choices from his replica of her generator
        _, replica = make_synchronized_pair(cfg.seeds.alice)
        replica_bits, _ = generate_bits(replica, cfg.n_pulses)
        alice_bits = replica_bits[idx]
    else:
        announcement = idx.tolist()  # click positions published by Bob
        alice_bits = rnd.bits_alice[np.asarray(announcement, dtype=np.int64)]

    clicks = len(idx)
    if clicks == 0:
        qber = 0.0
    elif cfg.qber_sample_fraction is None:
        qber = float(np.count_nonzero(alice_bits != bob_bits)) / clicks
    else:
        k = max(1, int(round(cfg.qber_sample_fraction * clicks)))
        pick = rnd.rng.choice(clicks, size=k, replace=False)
        qber = float(np.count_nonzero(alice_bits[pick] != bob_bits[pick])) / k

    observed = reconstruct_timing(arrivals, cfg.geometry)
    eta, timing_ok = verify_timing(rnd.timing, observed)
    holevo = holevo_bound(cfg.alphabet)
    rate = secret_key_rate(KeyRateInputs(eta, min(qber, 0.5), holevo))
    secret = max(0, round(rate * clicks)) if timing_ok else 0
    return SeriesReport(
        n_pulses=cfg.n_pulses,
        clicks=clicks,
        sifted_alice_bits=alice_bits.astype(int).tolist(),
        sifted_bob_bits=bob_bits.astype(int).tolist(),
        qber=qber,
        eta_timing=eta,
        holevo=holevo,
        key_rate=rate,
        secret_bits_estimate=secret,
        timing_ok=timing_ok,
        seeds=cfg.seeds,
        attack=attack,
    )


def run_series(cfg: SeriesConfig, attack: "Strategy | None" = None) -> SeriesReport:
    """Simulate one series of ``cfg.n_pulses`` clock cycles.

    Without an attack the channel is the honest link and the computation is
    vectorised. With an attack every cycle goes through the causality-checked
    engine; a strategy that reaches outside its light cone raises
    :class:`~relqkd.errors.CausalityViolation`.
    """
    cfg.validate()
    if attack is not None:
        from relqkd.adversary import run_attacked_series

        return run_attacked_series(cfg, attack)

    rnd = draw_randomness(cfg)
    ref, data = alice_amplitudes(cfg.alphabet, rnd.bits_alice)
    s_ae, s_eb = (math.sqrt(t) for t in link_transmittances(cfg))
    long_amp = ref * s_ae * s_eb * bob_phase_factors(cfg.alphabet, rnd.bits_bob)
    short_amp = data * s_ae * s_eb
    clicked = sample_clicks(cfg, rnd, long_amp, short_amp)
    return compile_report(cfg, rnd, clicked, alice_arrivals(cfg, rnd))


# ---------------------------------------------------------------------------
# analytics and calibration


def _branch_click_probabilities(cfg: SeriesConfig) -> dict[tuple[int, int], float]:
    t_ae, t_eb = link_transmittances(cfg)
    s = math.sqrt(t_ae * t_eb)
    a = cfg.alphabet
    out = {}
    for b_a in (0, 1):
        for b_b in (0, 1):
            long_amp = a.amplitude * s * complex(math.cos(a.phi * b_b), math.sin(a.phi * b_b))
            short_amp = a.amplitude * s * complex(math.cos(a.phi * b_a), math.sin(a.phi * b_a))
            mean = middle_slot_mean_photons_array(long_amp, short_amp, cfg.interferometer)
            out[(b_a, b_b)] = float(click_probability(mean, cfg.detector))
    return out


def expected_click_probability(cfg: SeriesConfig) -> float:
    """Per-cycle click probability averaged over uniform ``b_A``, ``b_B``."""
    return sum(_branch_click_probabilities(cfg).values()) / 4.0


def expected_qber(cfg: SeriesConfig) -> float:
    p = _branch_click_probabilities(cfg)
    wrong = p[(0, 0)] + p[(1, 1)]
    total = sum(p.values())
    return wrong / total if total > 0 else 0.0


def _bisect(f, lo: float, hi: float, rel_tol: float) -> float:
    """Root of an increasing ``f`` on ``[lo, hi]`` with ``f(lo) < 0 <= f(hi)``."""
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return hi


def calibrate_loss(target_raw_bits_per_series: float, cfg: SeriesConfig, rel_tol: float = 1e-6) -> float:
    """
    Apparatus transmittance that makes the expected clicks per series equal
    the target.

    Solves ``n * P_click(T_extra) = target`` by bisection on ``(0, 1]``,
    using the full four-branch click model (visibility and dark counts
    included).

    Raises
    ------
    CalibrationError
        If the target is at or below the dark-count floor (solution would be
        ``T_extra <= 0``) or above the value reachable at ``T_extra = 1``.
    """
    n = cfg.n_pulses

    def excess(t: float) -> float:
        return n * expected_click_probability(replace(cfg, extra_system_transmittance=t)) - target_raw_bits_per_series

    floor = excess(0.0) + target_raw_bits_per_series
    top = excess(1.0) + target_raw_bits_per_series
    if target_raw_bits_per_series <= floor:
        raise CalibrationError(
            f"target {target_raw_bits_per_series} raw bits is at or below the dark-count floor "
            f"{floor:.6g}: solution is T_extra = 0, outside (0, 1]"
        )
    if target_raw_bits_per_series > top:
        raise CalibrationError(
            f"target {target_raw_bits_per_series} raw bits exceeds the analytic maximum "
            f"{top:.6g} reached at T_extra = 1"
        )
    if target_raw_bits_per_series == top:
        return 1.0
    return _bisect(excess, 0.0, 1.0, rel_tol)


def calibrate_visibility(target_qber: float, cfg: SeriesConfig, tol: float = 1e-10) -> float:
    """Interferometer visibility giving the target attack-free QBER."""

    def qber_at(v: float) -> float:
        return expected_qber(replace(cfg, interferometer=replace(cfg.interferometer, visibility=v)))

    lo_q, hi_q = qber_at(1.0), qber_at(0.0)
    if not lo_q <= target_qber <= hi_q:
        raise CalibrationError(
            f"target QBER {target_qber} outside reachable range [{lo_q:.6g}, {hi_q:.6g}]"
        )
    # qber falls as visibility rises
    return _bisect(lambda v: target_qber - qber_at(v), 0.0, 1.0, tol)


def calibrate(cfg: SeriesConfig, target_raw_bits: float, target_qber: float, rounds: int = 50) -> SeriesConfig:
    """Fit visibility and apparatus loss jointly (they couple through dark counts)."""
    for _ in range(rounds):
        v = calibrate_visibility(target_qber, cfg)
        cfg_v = replace(cfg, interferometer=replace(cfg.interferometer, visibility=v))
        t = calibrate_loss(target_raw_bits, cfg_v, rel_tol=1e-12)
        new = replace(cfg_v, extra_system_transmittance=t)
        done = (
            abs(v - cfg.interferometer.visibility) < 1e-12
            and abs(t - cfg.extra_system_transmittance) < 1e-12 * max(t, 1e-300)
        )
        cfg = new
        if done:
            break
    return cfg

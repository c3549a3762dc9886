"""
Eavesdropping strategies and the causality-checked attack engine.

Eve sits on the line of sight at ``position`` (default: next to Alice).
Each cycle the engine lays out every piece of information Eve could ever
hold as a :class:`Record` stamped with the space-time event at which it
becomes available to her: Bob's timing choice at the start of the slot,
her measurement outcomes, her own decisions. Strategies are called at fixed
events and see the world only through a :class:`CausalView`; asking for a
record outside the past light cone of ``view.now`` raises
:class:`~relqkd.errors.CausalityViolation`.

Call points per cycle:

``prepoll``
    only for strategies with ``prepolls = True``; ``lead`` seconds before any
    news of Bob's timing choice can reach Eve. Eve fixes the schedule of a
    fake pulse pair sent to Alice.
``stage1``
    when the reference pulse has to leave Eve to make Bob's window.
``stage2``
    one pulse separation later, for the data pulse.

Strategies that capture the pulses (``captures = True``) consume them; they
must send ``replace`` amplitudes instead of ``forward``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from relqkd.core_math import SignalAlphabet, holevo_bound, state_overlap
from relqkd.errors import CausalityViolation, StrategyError
from relqkd.protocol import (
    SeriesConfig,
    SeriesReport,
    alice_amplitudes,
    bob_phase_factors,
    compile_report,
    draw_randomness,
    link_transmittances,
    sample_clicks,
)
from relqkd.spacetime import C_VACUUM, Event, causally_precedes, one_way_time

__all__ = [
    "Record",
    "CausalView",
    "StageDecision",
    "FORWARD",
    "BLOCK",
    "AttackOutcome",
    "Strategy",
    "PassiveStrategy",
    "BlockFirstStrategy",
    "BlockSecondStrategy",
    "DelayStrategy",
    "InterceptResendUSD",
    "PrePollStrategy",
    "FuzzStrategy",
    "PeekUSDStrategy",
    "PeekTimingStrategy",
    "CycleEngine",
    "usd_success_probability",
    "intercept_resend_usd_strategy",
    "pre_poll_strategy",
    "make_strategy",
    "STRATEGIES",
    "run_attacked_cycle",
    "run_attacked_series",
]


def usd_success_probability(alphabet: SignalAlphabet) -> float:
    """Optimal unambiguous-discrimination success for the two signal states."""
    return 1.0 - state_overlap(alphabet)


@dataclass(frozen=True)
class Record:
    key: str
    event: Event
    value: Any


class CausalView:
    """Everything Eve may know at event ``now``."""

    def __init__(
        self,
        now: Event,
        ledger: list[Record],
        stored_states: tuple[str, ...] = (),
        public: dict[str, Any] | None = None,
    ):
        self.now = now
        self._ledger = ledger
        self.history = tuple(r for r in ledger if causally_precedes(r.event, now))
        self.stored_states = stored_states
        self.public = public or {}

    def get(self, key: str) -> Any:
        """Value of record ``key``; raises if it lies outside the past light cone."""
        for r in self.history:
            if r.key == key:
                return r.value
        for r in self._ledger:
            if r.key == key:
                raise CausalityViolation(
                    f"{key!r} becomes available at {r.event}, outside the past light cone of {self.now}"
                )
        raise CausalityViolation(f"{key!r} has not happened yet at {self.now}")

    def knows(self, key: str) -> bool:
        return any(r.key == key for r in self.history)


@dataclass(frozen=True)
class StageDecision:
    action: str  # forward | block | replace | delay
    amplitude: complex | None = None
    delay: float = 0.0

    def __post_init__(self) -> None:
        if self.action not in ("forward", "block", "replace", "delay"):
            raise StrategyError(f"unknown action {self.action!r}")
        if self.action == "replace":
            if self.amplitude is None or not (math.isfinite(self.amplitude.real) and math.isfinite(self.amplitude.imag)):
                raise StrategyError("replace needs a finite amplitude")
        if self.action == "delay" and not (self.delay >= 0 and math.isfinite(self.delay)):
            raise StrategyError("delay must be finite and >= 0")

    @staticmethod
    def replace(amplitude: complex) -> "StageDecision":
        return StageDecision("replace", amplitude=complex(amplitude))

    @staticmethod
    def delayed(seconds: float) -> "StageDecision":
        return StageDecision("delay", delay=seconds)


FORWARD = StageDecision("forward")
BLOCK = StageDecision("block")
_ACTION_CODE = {"forward": 0, "block": 1, "replace": 2, "delay": 3}
_ACTION_NAME = {v: k for k, v in _ACTION_CODE.items()}


@dataclass
class AttackOutcome:
    """Per-cycle record of Eve's activity for one series."""

    name: str
    n_cycles: int
    stage1_actions: np.ndarray
    stage2_actions: np.ndarray
    usd_success: np.ndarray  # -1 not attempted, 0 failed, 1 succeeded
    known_bits: np.ndarray  # cycles in which Eve holds b_A with certainty
    prepoll_guesses: np.ndarray  # -1 when no pre-poll
    holevo_ceiling: float
    clicked: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def usd_attempts(self) -> int:
        return int(np.count_nonzero(self.usd_success >= 0))

    @property
    def usd_successes(self) -> int:
        return int(np.count_nonzero(self.usd_success == 1))

    @property
    def bits_identified(self) -> int:
        return int(np.count_nonzero(self.known_bits))

    @property
    def bits_identified_sifted(self) -> int:
        return int(np.count_nonzero(self.known_bits & self.clicked))

    @property
    def cycles_sacrificed(self) -> int:
        """Cycles in which Eve suppressed the data pulse."""
        return int(np.count_nonzero(self.stage2_actions == _ACTION_CODE["block"]))

    @property
    def info_per_click(self) -> float:
        c = int(np.count_nonzero(self.clicked))
        return self.bits_identified_sifted / c if c else 0.0

    def action_counts(self, stage: int) -> dict[str, int]:
        arr = self.stage1_actions if stage == 1 else self.stage2_actions
        return {_ACTION_NAME[c]: int(np.count_nonzero(arr == c)) for c in _ACTION_CODE.values()}

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "n_cycles": self.n_cycles,
            "stage1": self.action_counts(1),
            "stage2": self.action_counts(2),
            "usd_attempts": self.usd_attempts,
            "usd_successes": self.usd_successes,
            "prepolls": int(np.count_nonzero(self.prepoll_guesses >= 0)),
            "bits_identified": self.bits_identified,
            "bits_identified_sifted": self.bits_identified_sifted,
            "cycles_sacrificed": self.cycles_sacrificed,
            "info_per_click": self.info_per_click,
            "holevo_ceiling": self.holevo_ceiling,
        }


# ---------------------------------------------------------------------------
# strategies


class Strategy:
    """Base strategy: forwards everything untouched.

    Subclasses override the stage callbacks. ``position`` is Eve's location
    in metres from Bob; ``None`` puts her next to Alice.
    """

    name = "passive"
    captures = False
    measures_usd = False
    prepolls = False
    lead = 10e-9  # s, pre-poll margin ahead of Bob's timing information

    def __init__(self, position: float | None = None):
        self.position = position
        self.rng: np.random.Generator | None = None

    def reset(self, rng: np.random.Generator, cfg: SeriesConfig) -> None:
        self.rng = rng

    def prepoll(self, view: CausalView) -> int:
        raise NotImplementedError

    def stage1(self, view: CausalView) -> StageDecision:
        return FORWARD

    def stage2(self, view: CausalView) -> StageDecision:
        return FORWARD


class PassiveStrategy(Strategy):
    name = "passive"


class BlockFirstStrategy(Strategy):
    name = "block_first"

    def stage1(self, view):
        return BLOCK


class BlockSecondStrategy(Strategy):
    name = "block_second"

    def stage2(self, view):
        return BLOCK


class DelayStrategy(Strategy):
    """Holds both pulses back by ``delay`` seconds."""

    name = "delay"

    def __init__(self, delay: float = 10e-9, position: float | None = None):
        super().__init__(position)
        self.delay = delay

    def stage1(self, view):
        return StageDecision.delayed(self.delay)

    def stage2(self, view):
        return StageDecision.delayed(self.delay)


class InterceptResendUSD(Strategy):
    """
    Capture the pair, discriminate it unambiguously, resend.

    The reference pulse must be dealt with before the discrimination
    finishes, so the policy fixes it blind: ``always_forward_first`` sends a
    fresh copy of the (public) reference state, ``always_block_first``
    sends nothing, ``randomized`` forwards with probability ``p``. On
    success the learned bit is re-encoded on a fresh data pulse at the
    signal level seen by Eve. On failure ``failure="vacuum"`` sends no data
    pulse and ``failure="guess"`` encodes a random bit.
    """

    name = "usd"
    captures = True
    measures_usd = True

    def __init__(
        self,
        policy: str = "always_forward_first",
        p: float = 0.5,
        failure: str = "vacuum",
        position: float | None = None,
    ):
        super().__init__(position)
        if policy not in ("always_forward_first", "always_block_first", "randomized"):
            raise ValueError(f"unknown USD policy {policy!r}")
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if failure not in ("vacuum", "guess"):
            raise ValueError(f"unknown failure branch {failure!r}")
        self.policy, self.p, self.failure = policy, p, failure

    def stage1(self, view):
        if self.policy == "always_forward_first":
            forward = True
        elif self.policy == "always_block_first":
            forward = False
        else:
            forward = bool(self.rng.random() < self.p)
        return StageDecision.replace(view.public["reference"]) if forward else BLOCK

    def _encode(self, view, bit: int) -> StageDecision:
        alpha = view.public["reference"]
        phi = view.public["phi"]
        return StageDecision.replace(alpha * complex(math.cos(phi * bit), math.sin(phi * bit)))

    def stage2(self, view):
        bit = view.get("usd_outcome")
        if bit is not None:
            return self._encode(view, bit)
        if self.failure == "guess":
            return self._encode(view, int(self.rng.integers(0, 2)))
        return BLOCK


class PrePollStrategy(Strategy):
    """
    Poll Alice with a fake pair before Bob's real pulse can reach Eve.

    The fake must be scheduled before any news of Bob's early/late choice
    arrives, so the timing is a fair coin. Alice's bit is read from the
    bright fake and re-encoded perfectly toward Bob.
    """

    name = "prepoll"
    captures = True
    prepolls = True

    def __init__(self, lead: float = 10e-9, position: float | None = None):
        super().__init__(position)
        if not lead > 0:
            raise ValueError("lead must be positive")
        self.lead = lead

    def prepoll(self, view):
        return int(self.rng.integers(0, 2))

    def stage1(self, view):
        return StageDecision.replace(view.public["reference"])

    def stage2(self, view):
        # a "late" guess on an early cycle answers only after Bob's window
        if view.knows("polled_bit"):
            bit = view.get("polled_bit")
        else:
            bit = int(self.rng.integers(0, 2))
        alpha, phi = view.public["reference"], view.public["phi"]
        return StageDecision.replace(alpha * complex(math.cos(phi * bit), math.sin(phi * bit)))


class FuzzStrategy(Strategy):
    """Random legal decisions; reads every record in its view (fuzzing aid)."""

    name = "fuzz"

    def __init__(self, position: float | None = None):
        super().__init__(position)
        self.reads = 0

    def _touch(self, view):
        for r in view.history:
            view.get(r.key)
            self.reads += 1

    def _decide(self, view):
        self._touch(view)
        c = int(self.rng.integers(0, 4))
        if c == 0:
            return FORWARD
        if c == 1:
            return BLOCK
        if c == 2:
            return StageDecision.replace(view.public["reference"] * complex(*self.rng.normal(size=2)))
        return StageDecision.delayed(float(self.rng.exponential(5e-9)))

    def stage1(self, view):
        return self._decide(view)

    def stage2(self, view):
        return self._decide(view)


class PeekUSDStrategy(InterceptResendUSD):
    """Deliberately illegal: wants the discrimination result at stage 1."""

    name = "peek_usd"

    def stage1(self, view):
        bit = view.get("usd_outcome")
        return StageDecision.replace(view.public["reference"]) if bit is not None else BLOCK


class PeekTimingStrategy(PrePollStrategy):
    """Deliberately illegal: reads Bob's timing choice when scheduling the fake."""

    name = "peek_timing"

    def prepoll(self, view):
        return int(view.get("timing_bit"))


def intercept_resend_usd_strategy(policy: str = "always_forward_first", **kw) -> InterceptResendUSD:
    return InterceptResendUSD(policy=policy, **kw)


def pre_poll_strategy(**kw) -> PrePollStrategy:
    return PrePollStrategy(**kw)


STRATEGIES: dict[str, type[Strategy]] = {
    "passive": PassiveStrategy,
    "block_first": BlockFirstStrategy,
    "block_second": BlockSecondStrategy,
    "delay": DelayStrategy,
    "usd": InterceptResendUSD,
    "prepoll": PrePollStrategy,
    "fuzz": FuzzStrategy,
    "peek_usd": PeekUSDStrategy,
    "peek_timing": PeekTimingStrategy,
}


def make_strategy(name: str | None, params: dict[str, Any] | None = None) -> Strategy | None:
    """Build a strategy by registry name; ``None`` or ``"none"`` means no attack."""
    if name is None or name == "none":
        return None
    try:
        cls = STRATEGIES[name]
    except KeyError:
        raise ValueError(f"unknown attack {name!r}; choose from none, {', '.join(STRATEGIES)}") from None
    return cls(**(params or {}))


# ---------------------------------------------------------------------------
# engine


@dataclass
class CycleResult:
    long_amp: complex
    short_amp: complex
    arrival: float  # Alice's local timestamp of the pulse she answered
    stage1: StageDecision
    stage2: StageDecision
    usd: int
    known_bit: bool
    prepoll_guess: int


class CycleEngine:
    """Applies a strategy to the cycles of one series."""

    def __init__(self, cfg: SeriesConfig, strategy: Strategy, rnd=None):
        cfg.validate()
        g = cfg.geometry
        self.cfg = cfg
        self.strategy = strategy
        self.rnd = rnd if rnd is not None else draw_randomness(cfg)
        self.x_eve = g.distance if strategy.position is None else float(strategy.position)
        if not 0.0 <= self.x_eve <= g.distance:
            raise StrategyError(f"Eve's position {self.x_eve} m is off the link [0, {g.distance}]")
        strategy.reset(self.rnd.rng, cfg)

        self.t_ae, self.t_eb = link_transmittances(cfg, self.x_eve)
        self.s_ae, self.s_eb = math.sqrt(self.t_ae), math.sqrt(self.t_eb)
        self.ref, self.data = alice_amplitudes(cfg.alphabet, self.rnd.bits_alice)
        self.bob_phase = bob_phase_factors(cfg.alphabet, self.rnd.bits_bob)
        self.tau = one_way_time(g)
        self.tau_ae = one_way_time(g, g.distance - self.x_eve)
        self.alphabet_at_eve = SignalAlphabet(cfg.alphabet.mu * self.t_ae, cfg.alphabet.phi, cfg.alphabet.phase0)
        self.p_usd = usd_success_probability(self.alphabet_at_eve)
        self.public = {
            "reference": self.alphabet_at_eve.amplitude,
            "phi": cfg.alphabet.phi,
            "mu_at_eve": self.alphabet_at_eve.mu,
            "geometry": g,
            "position": self.x_eve,
        }

    def _view(self, now: Event, ledger: list[Record], stored: tuple[str, ...]) -> CausalView:
        view = CausalView(now, ledger, stored, self.public)
        for r in view.history:
            if not causally_precedes(r.event, now):
                raise CausalityViolation(f"engine invariant broken for {r.key!r}")
        return view

    def run_cycle(self, k: int) -> CycleResult:
        cfg, g, st = self.cfg, self.cfg.geometry, self.strategy
        rnd = self.rnd
        x = self.x_eve
        t0, dt = g.clock_period, g.pulse_separation
        b_t = int(rnd.timing.choices[k])
        b_a = int(rnd.bits_alice[k])
        slot_start = k * t0
        t_emit = slot_start + b_t * g.late_offset

        ledger = [Record("timing_bit", Event(0.0, slot_start), b_t)]
        guess = -1
        known = False
        if st.prepolls:
            now = Event(x, slot_start + x / C_VACUUM - st.lead)
            guess = int(st.prepoll(self._view(now, ledger, ())))
            if guess not in (0, 1):
                raise StrategyError(f"pre-poll guess must be 0 or 1, got {guess!r}")
            fake_emit = now.time + guess * g.late_offset
            arrival = fake_emit + self.tau_ae + rnd.clock_offset + rnd.jitter[k]
            polled_at = fake_emit + 2.0 * self.tau_ae + g.processing_delay
            ledger.append(Record("polled_bit", Event(x, polled_at), b_a))
            known = True
            pair = None  # Alice answered the fake; Eve swallows Bob's real pulse
        else:
            arrival = t_emit + self.tau + rnd.clock_offset + rnd.jitter[k]
            pair = (self.ref[k] * self.s_ae, self.data[k] * self.s_ae)

        t1 = t_emit + self.tau + g.processing_delay + self.tau_ae
        t2 = t1 + dt
        usd = -1
        if st.measures_usd and pair is not None:
            ok = bool(rnd.rng.random() < self.p_usd)
            usd = int(ok)
            known = known or ok
            ledger.append(Record("usd_outcome", Event(x, t2), b_a if ok else None))

        captured = st.captures
        d1 = st.stage1(self._view(Event(x, t1), ledger, ("reference",) if captured else ()))
        ledger.append(Record("stage1", Event(x, t1), d1))
        d2 = st.stage2(self._view(Event(x, t2), ledger, ("reference", "data") if captured else ()))
        if not isinstance(d1, StageDecision) or not isinstance(d2, StageDecision):
            raise StrategyError("stage callbacks must return StageDecision")

        long_amp = 0j
        short_amp = 0j
        half_window = g.detection_window / 2.0
        for i, d in enumerate((d1, d2)):
            offset = i * dt
            if d.action == "block":
                continue
            if d.action == "replace":
                amp = d.amplitude
            else:
                if captured or pair is None:
                    raise StrategyError(f"cannot {d.action} a pulse Eve has already captured")
                amp = pair[i]
                if d.action == "delay":
                    offset += d.delay
            amp = amp * self.s_eb
            if abs(offset) < dt / 2.0:
                amp = amp * self.bob_phase[k]
            if abs(offset) <= half_window:
                long_amp = amp if long_amp == 0j else long_amp + amp
            elif abs(offset - dt) <= half_window:
                short_amp = amp if short_amp == 0j else short_amp + amp
        return CycleResult(long_amp, short_amp, arrival, d1, d2, usd, known, guess)


def run_attacked_cycle(engine: CycleEngine, k: int) -> CycleResult:
    return engine.run_cycle(k)


def run_attacked_series(cfg: SeriesConfig, strategy: Strategy) -> SeriesReport:
    engine = CycleEngine(cfg, strategy)
    n = cfg.n_pulses
    long_amp = np.zeros(n, dtype=np.complex128)
    short_amp = np.zeros(n, dtype=np.complex128)
    arrivals = np.empty(n)
    s1 = np.empty(n, dtype=np.int8)
    s2 = np.empty(n, dtype=np.int8)
    usd = np.empty(n, dtype=np.int8)
    known = np.zeros(n, dtype=bool)
    guesses = np.empty(n, dtype=np.int8)
    for k in range(n):
        r = engine.run_cycle(k)
        long_amp[k] = r.long_amp
        short_amp[k] = r.short_amp
        arrivals[k] = r.arrival
        s1[k] = _ACTION_CODE[r.stage1.action]
        s2[k] = _ACTION_CODE[r.stage2.action]
        usd[k] = r.usd
        known[k] = r.known_bit
        guesses[k] = r.prepoll_guess
    clicked = sample_clicks(cfg, engine.rnd, long_amp, short_amp)
    outcome = AttackOutcome(
        name=strategy.name,
        n_cycles=n,
        stage1_actions=s1,
        stage2_actions=s2,
        usd_success=usd,
        known_bits=known,
        prepoll_guesses=guesses,
        holevo_ceiling=holevo_bound(cfg.alphabet),
        clicked=clicked,
    )
    return compile_report(cfg, engine.rnd, clicked, arrivals, attack=outcome)

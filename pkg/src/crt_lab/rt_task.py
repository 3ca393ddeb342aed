"""
Reaction-time task with a randomized quiescence interval.

On each trial a quiescence interval ``q`` is drawn uniformly from
``[q_low, q_high]``. The stimulus appears once the subject has gone ``q``
without pressing, counted from the trial start or from the latest press.
The press that ends that gap is rewarded and the next trial begins.

All durations are in milliseconds.

Under the null hypothesis (the subject detects rewards but not stimuli) the
presses carry no information about ``q`` beyond which press was rewarded, so
``q`` given the presses and rewards is its prior truncated to the trial's
feasible range ``(max earlier gap, final gap]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .engine import DEFAULT_RESAMPLES, SeedSpec, TailDirection, TestOutcome, run_crt
from .errors import InvalidInputError, SimulationOverflowError

MIN_GAP_MS = 1.0
MAX_PRESSES_PER_TRIAL = 10_000


@dataclass(frozen=True)
class RtConfig:
    q_low: float = 500.0
    q_high: float = 1000.0
    n_trials: int = 100

    def __post_init__(self):
        if not 0 < self.q_low < self.q_high:
            raise InvalidInputError(f"need 0 < q_low < q_high, got {self.q_low}, {self.q_high}")
        if self.n_trials < 1:
            raise InvalidInputError(f"n_trials must be >= 1, got {self.n_trials}")


@dataclass(frozen=True)
class RtTrial:
    gaps: tuple[float, ...]  # first gap from trial start, last gap ends at the rewarded press
    q: float

    @property
    def final_gap(self) -> float:
        return self.gaps[-1]


@dataclass(frozen=True)
class RtSession:
    config: RtConfig
    trials: tuple[RtTrial, ...]

    def __post_init__(self):
        if len(self.trials) != self.config.n_trials:
            raise InvalidInputError(
                f"session has {len(self.trials)} trials, config says {self.config.n_trials}"
            )

    @property
    def quiescence(self) -> np.ndarray:
        return np.array([t.q for t in self.trials])

    @cached_property
    def final_gaps(self) -> np.ndarray:
        return np.array([t.final_gap for t in self.trials])

    @cached_property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-trial feasible range endpoints ``(lo, hi)``."""
        pairs = [feasible_range(t, self.config) for t in self.trials]
        lo, hi = (np.array(v) for v in zip(*pairs))
        return lo, hi

    @cached_property
    def earlier_max(self) -> np.ndarray:
        return np.array([max(t.gaps[:-1], default=0.0) for t in self.trials])

    def feasible(self, q_values) -> np.ndarray:
        """Elementwise membership of ``q_values`` in each trial's feasible set.

        The set is ``(max earlier gap, final gap] & [q_low, q_high]``, so
        ``q_low`` itself is admissible when no earlier gap reaches it.
        """
        q = np.asarray(q_values, dtype=float)
        _, hi = self.bounds
        return (q > self.earlier_max) & (q >= self.config.q_low) & (q <= hi)

    @property
    def n_presses(self) -> int:
        return sum(len(t.gaps) for t in self.trials)


# ---------------------------------------------------------------------------
# Press strategies
# ---------------------------------------------------------------------------

def _normal_above(rng, mu, sigma, floor=MIN_GAP_MS):
    # normal truncated below by redrawing
    while True:
        x = rng.normal(mu, sigma)
        if x >= floor:
            return float(x)


@dataclass(frozen=True)
class RandomStrategy:
    """Presses at i.i.d. Gaussian intervals, blind to stimuli."""

    mu: float = 800.0
    sigma: float = 300.0

    def next_gap(self, q, previous, rng):
        return _normal_above(rng, self.mu, self.sigma)


@dataclass(frozen=True)
class ResponseStrategy:
    """Waits for the shorter of a baseline interval and a stimulus-locked response."""

    mu: float = 800.0
    sigma: float = 300.0
    mu_r: float = 150.0
    sigma_r: float = 50.0

    def next_gap(self, q, previous, rng):
        baseline = _normal_above(rng, self.mu, self.sigma)
        if q > baseline:
            return baseline
        return min(baseline, q + _normal_above(rng, self.mu_r, self.sigma_r))


@dataclass(frozen=True)
class DecelerationStrategy:
    """Each gap is the previous one plus a fresh Gaussian increment; resets every trial."""

    mu_d: float = 150.0
    sigma_d: float = 50.0

    def next_gap(self, q, previous, rng):
        last = previous[-1] if previous else 0.0
        return last + _normal_above(rng, self.mu_d, self.sigma_d)


STRATEGIES = {
    "random": RandomStrategy,
    "response": ResponseStrategy,
    "deceleration": DecelerationStrategy,
}


def make_strategy(name: str, **params):
    try:
        cls = STRATEGIES[name]
    except KeyError:
        raise InvalidInputError(f"unknown RT strategy {name!r}; choose from {sorted(STRATEGIES)}")
    strategy = cls(**params)
    for key, value in vars(strategy).items():
        if value <= 0:
            raise InvalidInputError(f"strategy parameter {key} must be positive, got {value}")
    return strategy


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def simulate_rt_trial(strategy, q: float, rng) -> RtTrial:
    gaps: list[float] = []
    while len(gaps) < MAX_PRESSES_PER_TRIAL:
        gap = strategy.next_gap(q, gaps, rng)
        gaps.append(gap)
        if gap >= q:
            return RtTrial(gaps=tuple(gaps), q=q)
    raise SimulationOverflowError(
        f"trial with q={q} ms not rewarded after {MAX_PRESSES_PER_TRIAL} presses"
    )


def simulate_rt_session(strategy, config: RtConfig, rng: np.random.Generator) -> RtSession:
    trials = []
    for _ in range(config.n_trials):
        q = float(rng.uniform(config.q_low, config.q_high))
        trials.append(simulate_rt_trial(strategy, q, rng))
    return RtSession(config=config, trials=tuple(trials))


# ---------------------------------------------------------------------------
# Conditional resampling
# ---------------------------------------------------------------------------

def feasible_range(trial: RtTrial, config: RtConfig) -> tuple[float, float]:
    """Half-open interval ``(lo, hi]`` of quiescence values that reward the same press."""
    gaps = trial.gaps
    if len(gaps) == 0:
        raise InvalidInputError("trial has no presses")
    if min(gaps) <= 0:
        raise InvalidInputError(f"gaps must be strictly positive: {gaps}")
    earlier = max(gaps[:-1], default=0.0)
    if not earlier < trial.q <= gaps[-1]:
        raise InvalidInputError(
            f"q={trial.q} inconsistent with gaps {gaps}: the last press must be the first "
            "press after the stimulus"
        )
    if not config.q_low <= trial.q <= config.q_high:
        raise InvalidInputError(f"q={trial.q} outside [{config.q_low}, {config.q_high}]")
    return max(config.q_low, earlier), min(config.q_high, gaps[-1])


def _uniform_prior(config):
    def draw(rng, n):
        return rng.uniform(config.q_low, config.q_high, n)
    return draw


def resample_quiescence(
    session: RtSession,
    rng: np.random.Generator,
    size: int | None = None,
    method: str = "truncated",
    prior: Callable[[np.random.Generator, int], np.ndarray] | None = None,
) -> np.ndarray:
    """Draw quiescence intervals from the prior truncated to each feasible range.

    Parameters
    ----------
    session : RtSession
    rng : numpy.random.Generator
    size : int, optional
        Number of independent resampled sequences. Output has shape
        ``(size, n_trials)``, or ``(n_trials,)`` when omitted.
    method : {"truncated", "rejection"}
        "truncated" draws directly from the uniform distribution on
        ``(lo, hi]``. "rejection" draws from ``prior`` and redraws every
        value that falls outside its trial's range.
    prior : callable, optional
        ``prior(rng, n)`` returning ``n`` prior draws; rejection method
        only. Defaults to the config's uniform prior.
    """
    lo, hi = session.bounds
    shape = lo.shape if size is None else (size,) + lo.shape

    if method == "truncated":
        if prior is not None:
            raise InvalidInputError("a custom prior requires method='rejection'")
        # hi - width*u with u in [0, 1) lands in (lo, hi]
        q = hi - (hi - lo) * rng.random(shape)
        return np.maximum(q, np.nextafter(lo, np.inf))

    if method == "rejection":
        prior = prior or _uniform_prior(session.config)
        lo_b = np.broadcast_to(lo, shape).ravel()
        hi_b = np.broadcast_to(hi, shape).ravel()
        q = np.empty(lo_b.size)
        pending = np.arange(lo_b.size)
        while pending.size:
            draw = np.asarray(prior(rng, pending.size), dtype=float)
            ok = (draw > lo_b[pending]) & (draw <= hi_b[pending])
            q[pending[ok]] = draw[ok]
            pending = pending[~ok]
        return q.reshape(shape)

    raise InvalidInputError(f"unknown resampling method {method!r}")


# ---------------------------------------------------------------------------
# Statistic and replay
# ---------------------------------------------------------------------------

def mean_reaction_time(session: RtSession, q_values) -> float | np.ndarray:
    """Mean over trials of (final gap - q): the stimulus-to-rewarded-press time.

    ``q_values`` may be a single sequence or a stack of sequences along the
    first axis, in which case one mean per row is returned.
    """
    q = np.asarray(q_values, dtype=float)
    n = len(session.trials)
    if q.shape[-1:] != (n,):
        raise InvalidInputError(f"expected {n} quiescence values, got shape {q.shape}")
    if not np.all(session.feasible(q)):
        raise InvalidInputError("quiescence value outside its trial's feasible range")
    rt = np.mean(session.final_gaps - q, axis=-1)
    return float(rt) if rt.ndim == 0 else rt


def reward_vector(session: RtSession) -> np.ndarray:
    """Per-press reward flags: exactly the last press of each trial is rewarded."""
    flags = []
    for trial in session.trials:
        flags.extend([0] * (len(trial.gaps) - 1) + [1])
    return np.array(flags, dtype=np.int8)


def replay_rewards(session: RtSession, q_values) -> np.ndarray:
    """Re-run the task mechanics on the recorded presses with other quiescence values.

    Each trial's presses are held fixed and the rewarded press becomes the
    first whose gap reaches the given ``q``. Returns the per-press reward
    flags, stacked along the first axis when ``q_values`` is 2-D. A trial in
    which no recorded press reaches ``q`` gets no reward.
    """
    q = np.asarray(q_values, dtype=float)
    width = max(len(t.gaps) for t in session.trials)
    padded = np.full((len(session.trials), width), -np.inf)
    for i, trial in enumerate(session.trials):
        padded[i, : len(trial.gaps)] = trial.gaps
    valid = np.isfinite(padded)

    reached = padded >= q[..., None]
    first = np.argmax(reached, axis=-1)
    any_reached = reached.any(axis=-1)
    rewarded = (np.arange(width) == first[..., None]) & any_reached[..., None]
    return rewarded[..., valid].astype(np.int8)


def rt_crt(
    session: RtSession,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: SeedSpec = SeedSpec(0),
) -> TestOutcome:
    """Lower-tail CRT of mean reaction time against resampled quiescence intervals."""
    return run_crt(
        session.quiescence,
        statistic=lambda q: mean_reaction_time(session, q),
        resampler=lambda q, rng, n: resample_quiescence(session, rng, size=n),
        n_resamples=n_resamples,
        tail=TailDirection.LOWER,
        seed=seed,
        vectorized=True,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def session_to_dict(session: RtSession) -> dict:
    c = session.config
    return {
        "config": {"q_low_ms": c.q_low, "q_high_ms": c.q_high, "n_trials": c.n_trials},
        "trials": [{"gaps_ms": list(t.gaps), "q_ms": t.q} for t in session.trials],
    }


def session_from_dict(data: dict) -> RtSession:
    try:
        c = data["config"]
        config = RtConfig(q_low=float(c["q_low_ms"]), q_high=float(c["q_high_ms"]),
                          n_trials=int(c["n_trials"]))
        trials = tuple(
            RtTrial(gaps=tuple(float(g) for g in t["gaps_ms"]), q=float(t["q_ms"]))
            for t in data["trials"]
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed RT session: {exc!r}") from exc
    session = RtSession(config=config, trials=trials)
    session.bounds  # validates every trial
    return session

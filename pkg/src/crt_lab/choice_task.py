"""
Probabilistic choice task with block-structured stimuli.

Sides are coded -1 (left) / +1 (right) and rewards 0 / 1. Each trial ``t``
has a block side ``b_t`` fixed before the session, a stimulus ``s_t`` equal
to ``b_t`` with probability ``alpha``, a choice ``c_t`` and a reward ``r_t``
delivered with probability ``beta`` when ``c_t == s_t`` and ``gamma``
otherwise.

If the subject cannot see the stimulus, ``{b_t, c_t, r_t}`` is the Markov
boundary of ``s_t`` and the stimuli can be resampled trial by trial from

    P[s_t | b_t, c_t, r_t]  ~  P[s_t | b_t] * P[r_t | s_t, c_t]

which conditions on the future through ``r_t``. The tangent resampler draws
from ``P[s_t | b_t]`` only and is provided for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .engine import DEFAULT_RESAMPLES, SeedSpec, TailDirection, TestOutcome, derive_stream, run_crt
from .errors import InconsistentObservationError, InvalidInputError

LEFT, RIGHT = -1, 1


@dataclass(frozen=True)
class ChoiceConfig:
    alpha: float = 0.8
    beta: float = 0.8
    gamma: float = 0.2
    n_trials: int = 500
    block_len_min: int = 20
    block_len_max: int = 100

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {value}")
        if self.n_trials < 1:
            raise InvalidInputError(f"n_trials must be >= 1, got {self.n_trials}")
        if not 1 <= self.block_len_min <= self.block_len_max:
            raise InvalidInputError(
                f"need 1 <= block_len_min <= block_len_max, got "
                f"{self.block_len_min}, {self.block_len_max}"
            )


@dataclass(frozen=True, eq=False)
class ChoiceSession:
    config: ChoiceConfig
    blocks: np.ndarray
    stimuli: np.ndarray
    choices: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        n = self.config.n_trials
        for name in ("blocks", "stimuli", "choices", "rewards"):
            arr = np.array(getattr(self, name), dtype=np.int8)
            if arr.shape != (n,):
                raise InvalidInputError(f"{name} has shape {arr.shape}, expected ({n},)")
            allowed = (0, 1) if name == "rewards" else (LEFT, RIGHT)
            if not np.isin(arr, allowed).all():
                raise InvalidInputError(f"{name} contains values outside {allowed}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.config.n_trials


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------

def generate_blocks(config: ChoiceConfig, rng: np.random.Generator, first_side: int | None = None) -> np.ndarray:
    """Alternating blocks with lengths uniform on ``block_len_min..block_len_max``."""
    side = first_side if first_side is not None else (RIGHT if rng.random() < 0.5 else LEFT)
    if side not in (LEFT, RIGHT):
        raise InvalidInputError(f"first_side must be -1 or +1, got {side}")
    out = np.empty(config.n_trials, dtype=np.int8)
    pos = 0
    while pos < config.n_trials:
        length = int(rng.integers(config.block_len_min, config.block_len_max + 1))
        out[pos:pos + length] = side
        pos += length
        side = -side
    return out


# ---------------------------------------------------------------------------
# Agent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgentParams:
    rl_rate: float = 0.3
    habit_rate: float = 0.2
    rl_weight: float = 3.0
    habit_weight: float = 1.0
    stim_weight: float = 0.0

    def __post_init__(self):
        for name in ("rl_rate", "habit_rate"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise InvalidInputError(f"{name} must lie in (0, 1], got {value}")
        for name in ("rl_weight", "habit_weight", "stim_weight"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0")

    @property
    def blind(self) -> bool:
        return self.stim_weight == 0


AGENTS = {
    "blind": AgentParams(),
    "sighted": AgentParams(stim_weight=2.0),
}


def make_agent(name: str, **overrides) -> AgentParams:
    try:
        base = AGENTS[name]
    except KeyError:
        raise InvalidInputError(f"unknown agent {name!r}; choose from {sorted(AGENTS)}")
    return replace(base, **overrides)


@dataclass(frozen=True)
class AgentState:
    # indexed [left, right]
    value: tuple[float, float] = (0.5, 0.5)
    habit: tuple[float, float] = (0.5, 0.5)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def choice_probability(state: AgentState, params: AgentParams, stimulus: int | None) -> float:
    """P(choice = right) under the mixture of a value term, a habit term and the stimulus."""
    logit = (params.rl_weight * (state.value[1] - state.value[0])
             + params.habit_weight * (state.habit[1] - state.habit[0]))
    if not params.blind:
        if stimulus is None:
            raise InvalidInputError("a sighted agent needs the stimulus")
        logit += params.stim_weight * stimulus
    return _sigmoid(logit)


def agent_step(state: AgentState, params: AgentParams, stimulus: int | None, rng):
    """Draw one choice, returning it with a function that applies the reward.

    The value of the chosen side moves toward the reward; both habit
    strengths move toward the indicator of having been chosen.
    """
    choice = RIGHT if rng.random() < choice_probability(state, params, stimulus) else LEFT
    k = 1 if choice == RIGHT else 0

    def update(reward: int) -> AgentState:
        value = list(state.value)
        value[k] += params.rl_rate * (reward - value[k])
        habit = tuple(h + params.habit_rate * ((i == k) - h) for i, h in enumerate(state.habit))
        return AgentState(value=tuple(value), habit=habit)

    return choice, update


def simulate_choice_session(params: AgentParams, config: ChoiceConfig, seed) -> ChoiceSession:
    """Simulate one session; ``seed`` is a :class:`SeedSpec` or a Generator."""
    rng = derive_stream(seed) if isinstance(seed, SeedSpec) else seed
    blocks = generate_blocks(config, rng)
    n = config.n_trials
    stimuli = np.empty(n, dtype=np.int8)
    choices = np.empty(n, dtype=np.int8)
    rewards = np.empty(n, dtype=np.int8)
    state = AgentState()
    for t in range(n):
        b = int(blocks[t])
        s = b if rng.random() < config.alpha else -b
        # a blind agent is never handed the stimulus
        choice, update = agent_step(state, params, None if params.blind else s, rng)
        r = int(rng.random() < (config.beta if choice == s else config.gamma))
        state = update(r)
        stimuli[t], choices[t], rewards[t] = s, choice, r
    return ChoiceSession(config=config, blocks=blocks, stimuli=stimuli, choices=choices, rewards=rewards)


# ---------------------------------------------------------------------------
# Resamplers
# ---------------------------------------------------------------------------

def _reward_likelihood(matched: bool, r: int, config: ChoiceConfig) -> float:
    p_reward = config.beta if matched else config.gamma
    return p_reward if r == 1 else 1.0 - p_reward


def posterior_stimulus(b: int, c: int, r: int, config: ChoiceConfig) -> float:
    """P(s = b | b, c, r) for a subject whose choice ignores the stimulus."""
    on_block = config.alpha * _reward_likelihood(c == b, r, config)
    off_block = (1.0 - config.alpha) * _reward_likelihood(c == -b, r, config)
    total = on_block + off_block
    if total == 0:
        raise InconsistentObservationError(
            f"choice {c} with reward {r} is impossible for either stimulus in block {b}"
        )
    return on_block / total


def posterior_match_probs(session: ChoiceSession, config: ChoiceConfig | None = None) -> np.ndarray:
    """Per-trial P(s_t = b_t | b_t, c_t, r_t) as an array."""
    config = config or session.config
    matched = session.choices == session.blocks
    probs = np.empty(len(session))
    for m in (False, True):
        for r in (0, 1):
            cell = (matched == m) & (session.rewards == r)
            if cell.any():
                c = RIGHT if m else LEFT  # block side RIGHT, so c == b iff matched
                probs[cell] = posterior_stimulus(RIGHT, c, r, config)
    return probs


def _draw_sides(blocks, p_block, rng, size):
    shape = blocks.shape if size is None else (size,) + blocks.shape
    on_block = rng.random(shape) < p_block
    return np.where(on_block, blocks, -blocks)


def conditional_resample_stimuli(session: ChoiceSession, config: ChoiceConfig | None = None,
                                 rng=None, size: int | None = None) -> np.ndarray:
    """Independent per-trial draws from ``P[s_t | b_t, c_t, r_t]``.

    Returns shape ``(n_trials,)`` or ``(size, n_trials)``.
    """
    return _draw_sides(session.blocks, posterior_match_probs(session, config), rng, size)


def tangent_resample_stimuli(session: ChoiceSession, config: ChoiceConfig | None = None,
                             rng=None, size: int | None = None) -> np.ndarray:
    """Independent per-trial draws from ``P[s_t | b_t]``, ignoring choices and rewards."""
    config = config or session.config
    return _draw_sides(session.blocks, config.alpha, rng, size)


RESAMPLERS = {
    "conditional": conditional_resample_stimuli,
    "tangent": tangent_resample_stimuli,
}


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def _stimuli(session, stimuli):
    s = session.stimuli if stimuli is None else np.asarray(stimuli)
    if s.shape[-1:] != session.choices.shape:
        raise InvalidInputError(
            f"stimuli shape {s.shape} does not align with {len(session)} choices"
        )
    return s


def stat_same_trial(session: ChoiceSession, stimuli=None):
    """Sum over trials of s_t * c_t."""
    s = _stimuli(session, stimuli)
    # float matmul is exact for these integer sums
    out = s.astype(np.float64) @ session.choices.astype(np.float64)
    return int(out) if out.ndim == 0 else out


def stat_delayed(session: ChoiceSession, stimuli=None):
    """Sum over t < T of s_t * c_{t+1}."""
    if len(session) < 2:
        raise InvalidInputError("delayed statistic needs at least two trials")
    s = _stimuli(session, stimuli)
    out = s[..., :-1].astype(np.float64) @ session.choices[1:].astype(np.float64)
    return int(out) if out.ndim == 0 else out


STATISTICS: dict[str, Callable] = {
    "same_trial": stat_same_trial,
    "delayed": stat_delayed,
}


def choice_crt(
    session: ChoiceSession,
    statistic: str = "same_trial",
    resampler: str = "conditional",
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: SeedSpec = SeedSpec(0),
    config: ChoiceConfig | None = None,
) -> TestOutcome:
    """Upper-tail randomization test of a stimulus-choice statistic."""
    try:
        stat_fn = STATISTICS[statistic]
        resample_fn = RESAMPLERS[resampler]
    except KeyError as exc:
        raise InvalidInputError(f"unknown statistic or resampler: {exc}") from None
    config = config or session.config
    return run_crt(
        session.stimuli,
        statistic=lambda s: stat_fn(session, s),
        resampler=lambda s, rng, n: resample_fn(session, config, rng, size=n),
        n_resamples=n_resamples,
        tail=TailDirection.UPPER,
        seed=seed,
        vectorized=True,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def session_to_dict(session: ChoiceSession) -> dict:
    c = session.config
    return {
        "config": {
            "alpha": c.alpha, "beta": c.beta, "gamma": c.gamma, "n_trials": c.n_trials,
            "block_len_min": c.block_len_min, "block_len_max": c.block_len_max,
        },
        "blocks": session.blocks.tolist(),
        "stimuli": session.stimuli.tolist(),
        "choices": session.choices.tolist(),
        "rewards": session.rewards.tolist(),
    }


def session_from_dict(data: dict) -> ChoiceSession:
    try:
        config = ChoiceConfig(**data["config"])
        return ChoiceSession(
            config=config,
            blocks=np.array(data["blocks"]),
            stimuli=np.array(data["stimuli"]),
            choices=np.array(data["choices"]),
            rewards=np.array(data["rewards"]),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed choice session: {exc!r}") from exc

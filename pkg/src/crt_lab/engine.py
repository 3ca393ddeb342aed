"""
Generic conditional randomization test engine.

A test compares an observed statistic ``T(X)`` against a null ensemble
``{T(X')}`` where each ``X'`` is drawn from ``P[X | S(X)]`` by a caller
supplied resampler. The p-value is rank based, exact under the null, and
never zero: ``p = (1 + N - M) / (1 + N)`` where ``M`` counts ensemble members
beaten by the observed value.

Randomness is organised as named streams derived from a ``SeedSpec``
(master seed, stream index) so that sessions can run in any order or in
parallel and still reproduce bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable

import numpy as np

from .errors import InvalidInputError, ResampleError

DEFAULT_RESAMPLES = 999


class TailDirection(str, Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if self.master_seed < 0 or self.stream_index < 0:
            raise InvalidInputError(f"seed components must be non-negative: {self}")


def derive_stream(seed: SeedSpec) -> np.random.Generator:
    """Map ``(master_seed, stream_index)`` to its own PCG64 generator.

    The pair is hashed through ``SeedSequence`` so distinct pairs give
    independent streams and equal pairs give identical ones.
    """
    return np.random.default_rng(np.random.SeedSequence([seed.master_seed, seed.stream_index]))


def _crt_sequences(seed: SeedSpec):
    root = np.random.SeedSequence([seed.master_seed, seed.stream_index])
    resample_seq, tiebreak_seq = root.spawn(2)
    return resample_seq, tiebreak_seq


def resample_stream(seed: SeedSpec) -> np.random.Generator:
    """Stream that drives the resampler inside :func:`run_crt`."""
    return np.random.default_rng(_crt_sequences(seed)[0])


def tiebreak_stream(seed: SeedSpec) -> np.random.Generator:
    """Stream that breaks ties inside :func:`run_crt`.

    Kept separate from the resampling stream so a stored outcome can be
    re-ranked from ``(t_obs, ensemble, tail, seed)`` alone.
    """
    return np.random.default_rng(_crt_sequences(seed)[1])


def count_beaten(t_obs: float, ensemble, tail, rng: np.random.Generator) -> int:
    """Number of ensemble values the observed statistic beats, ties broken at random.

    Breaking ties by adding an independent jitter smaller than the smallest
    gap between distinct values only reorders exactly tied values, and it
    orders them by their jitter draws. That is what happens here, in the
    limit of vanishing jitter, so no rounding can leak into untied values.
    """
    tail = TailDirection(tail)
    ens = np.asarray(ensemble, dtype=float).ravel()
    if ens.size == 0:
        raise InvalidInputError("null ensemble is empty")
    if not np.isfinite(t_obs):
        raise InvalidInputError(f"observed statistic is not finite: {t_obs}")
    if not np.all(np.isfinite(ens)):
        raise InvalidInputError("null ensemble contains non-finite values")

    if tail is TailDirection.UPPER:
        m = int(np.count_nonzero(ens < t_obs))
    else:
        m = int(np.count_nonzero(ens > t_obs))
    n_ties = int(np.count_nonzero(ens == t_obs))
    if n_ties:
        jitter = rng.random(n_ties + 1)
        m += int(np.count_nonzero(jitter[1:] < jitter[0]))
    return m


def p_value(t_obs: float, ensemble, tail, rng: np.random.Generator) -> float:
    """Exact randomization p-value of ``t_obs`` against ``ensemble``.

    Parameters
    ----------
    t_obs : float
        Statistic evaluated on the observed data.
    ensemble : array_like, shape (N,)
        Statistic evaluated on N resampled datasets.
    tail : {"upper", "lower"}
        "upper" treats large statistics as evidence against the null,
        "lower" treats small ones that way.
    rng : numpy.random.Generator
        Source of tie-breaking draws.

    Returns
    -------
    float
        ``(1 + N - M) / (1 + N)``, one of ``1/(N+1), ..., 1``.
    """
    n = np.size(ensemble)
    m = count_beaten(t_obs, ensemble, tail, rng)
    return (1 + n - m) / (1 + n)


@dataclass(frozen=True, eq=False)
class TestOutcome:
    t_obs: float
    ensemble: np.ndarray
    p: float
    tail: TailDirection
    seed: SeedSpec
    n_beaten: int

    __test__ = False  # not a pytest class

    @property
    def n_resamples(self) -> int:
        return int(self.ensemble.size)

    def recompute_p(self) -> float:
        return p_value(self.t_obs, self.ensemble, self.tail, tiebreak_stream(self.seed))

    def to_dict(self) -> dict:
        return {
            "t_obs": self.t_obs,
            "ensemble": self.ensemble.tolist(),
            "p": self.p,
            "tail": self.tail.value,
            "seed": {"master_seed": self.seed.master_seed, "stream_index": self.seed.stream_index},
            "n_beaten": self.n_beaten,
        }


def run_crt(
    dataset: Any,
    statistic: Callable[[Any], Any],
    resampler: Callable[..., Any],
    n_resamples: int = DEFAULT_RESAMPLES,
    tail=TailDirection.UPPER,
    seed: SeedSpec = SeedSpec(0),
    vectorized: bool = False,
) -> TestOutcome:
    """Run a conditional randomization test.

    ``resampler(dataset, rng)`` must return one draw from ``P[X | S(X)]``
    under the null; that is the caller's obligation. With
    ``vectorized=True`` it is instead called once as
    ``resampler(dataset, rng, n_resamples)`` and must return a stack of
    draws along the first axis, and ``statistic`` must map that stack to
    one value per draw.
    """
    if n_resamples < 1:
        raise InvalidInputError(f"n_resamples must be >= 1, got {n_resamples}")
    tail = TailDirection(tail)
    rng = resample_stream(seed)
    t_obs = float(statistic(dataset))

    if vectorized:
        try:
            ensemble = np.asarray(statistic(resampler(dataset, rng, n_resamples)), dtype=float)
        except Exception as exc:
            raise ResampleError(None, exc) from exc
        if ensemble.shape != (n_resamples,):
            raise InvalidInputError(
                f"vectorized statistic returned shape {ensemble.shape}, expected ({n_resamples},)"
            )
    else:
        ensemble = np.empty(n_resamples)
        for i in range(n_resamples):
            try:
                ensemble[i] = statistic(resampler(dataset, rng))
            except Exception as exc:
                raise ResampleError(i, exc) from exc

    m = count_beaten(t_obs, ensemble, tail, tiebreak_stream(seed))
    p = (1 + n_resamples - m) / (1 + n_resamples)
    return TestOutcome(t_obs=t_obs, ensemble=ensemble, p=p, tail=tail, seed=seed, n_beaten=m)

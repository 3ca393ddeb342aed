"""Exit criteria for the package, run at full scale.

The replication grid (8 experiments x 1000 sessions x 999 resamples) is
run once per module and a second time for the determinism check.
"""
import itertools
from fractions import Fraction

import numpy as np
import pytest

from crt_lab import choice_task as ct
from crt_lab import harness
from crt_lab import rt_task as rt
from crt_lab.engine import SeedSpec, derive_stream, run_crt

N_SESSIONS = 1000
N_RESAMPLES = 999
ALPHA = 0.05


@pytest.fixture(scope="module")
def replication():
    return {row.name: (row, report) for row, report in harness.replicate_paper(N_SESSIONS, N_RESAMPLES)}


GRID_CRITERIA = [
    ("C1 RT random strategy", "rt_random"),
    ("C2 RT response strategy", "rt_response"),
    ("C3 RT deceleration strategy", "rt_deceleration"),
    ("C4 choice blind/conditional/same-trial", "choice_blind_conditional_same_trial"),
    ("C5 choice sighted/conditional/same-trial", "choice_sighted_conditional_same_trial"),
    ("C6 choice blind/tangent/same-trial", "choice_blind_tangent_same_trial"),
    ("C7 choice blind/conditional/delayed", "choice_blind_conditional_delayed"),
    ("C8 choice blind/tangent/delayed", "choice_blind_tangent_delayed"),
]


@pytest.mark.parametrize("criterion, name", GRID_CRITERIA, ids=[c for c, _ in GRID_CRITERIA])
def test_replication_band(replication, acceptance_log, criterion, name):
    row, report = replication[name]
    assert len(report.sessions) == N_SESSIONS
    assert report.spec.n_resamples == N_RESAMPLES
    rate = report.rejection_rate(ALPHA)
    lo, hi = row.band
    ok = acceptance_log(
        criterion, lo <= rate <= hi,
        f"rate {rate:.3f} at alpha={ALPHA} (band [{lo}, {hi}], published {row.published_per_1000}/1000)",
    )
    assert ok


def _enumerated(b, c, r, alpha, beta, gamma):
    alpha, beta, gamma = (Fraction(x) for x in (alpha, beta, gamma))
    joint = {}
    for s in (-1, 1):
        p_s = alpha if s == b else 1 - alpha
        p_reward = beta if c == s else gamma
        joint[s] = p_s * (p_reward if r == 1 else 1 - p_reward)
    return joint[b] / (joint[-1] + joint[1])


def test_c9_posterior_oracle(acceptance_log):
    cfg = ct.ChoiceConfig(alpha=0.8, beta=0.8, gamma=0.2)
    worst = 0.0
    for b, c, r in itertools.product((-1, 1), (-1, 1), (0, 1)):
        expected = float(_enumerated(b, c, r, "0.8", "0.8", "0.2"))
        got = ct.posterior_stimulus(b, c, r, cfg)
        worst = max(worst, abs(got - expected) / expected)
    worked_examples = (
        ct.posterior_stimulus(1, 1, 0, cfg) == pytest.approx(0.5, rel=1e-12)
        and ct.posterior_stimulus(1, 1, 1, cfg) == pytest.approx(0.64 / 0.68, rel=1e-12)
    )
    ok = acceptance_log("C9 posterior oracle", worst <= 1e-12 and worked_examples,
                        f"max relative error {worst:.2e} over 8 cells; worked examples 0.5 and 0.9412")
    assert ok


def test_c10_markov_boundary_frequencies(acceptance_log):
    cfg = ct.ChoiceConfig()
    sessions = [ct.simulate_choice_session(ct.make_agent("blind"), cfg, SeedSpec(1010, i)) for i in range(220)]
    b, c, r, s = (np.concatenate([getattr(x, k) for x in sessions])
                  for k in ("blocks", "choices", "rewards", "stimuli"))
    assert b.size >= 100_000
    worst = 0.0
    for bb, cc, rr in itertools.product((-1, 1), (-1, 1), (0, 1)):
        cell = (b == bb) & (c == cc) & (r == rr)
        n = int(cell.sum())
        expected = ct.posterior_stimulus(bb, cc, rr, cfg)
        z = abs(np.mean(s[cell] == bb) - expected) / np.sqrt(expected * (1 - expected) / n)
        worst = max(worst, z)
    ok = acceptance_log("C10 Markov-boundary frequency oracle", worst <= 3.0,
                        f"{b.size} trials, largest deviation {worst:.2f} sigma")
    assert ok


def test_c11_feasibility_and_replay(acceptance_log):
    n_resampled = 0
    feasible = replay_ok = True
    for k, name in enumerate(sorted(rt.STRATEGIES)):
        strat = rt.make_strategy(name)
        for i in range(34):
            session = rt.simulate_rt_session(strat, rt.RtConfig(), derive_stream(SeedSpec(1111 + k, i)))
            q = rt.resample_quiescence(session, np.random.default_rng([k, i]), size=100)
            feasible &= bool(np.all(session.feasible(q)))
            replay_ok &= bool(np.all(rt.replay_rewards(session, q) == rt.reward_vector(session)))
            n_resampled += q.shape[0]
    assert n_resampled >= 10_000
    ok = acceptance_log("C11 feasibility and replay", feasible and replay_ok,
                        f"{n_resampled} resampled sessions, all feasible={feasible}, replay exact={replay_ok}")
    assert ok


def test_c12_engine_exactness(acceptance_log):
    n_reps = 10_000
    ps = np.empty(n_reps)
    for i in range(n_reps):
        x = derive_stream(SeedSpec(1212, i)).normal()
        ps[i] = run_crt(x, lambda v: v, lambda v, rng, size: rng.normal(size=size),
                        n_resamples=N_RESAMPLES, seed=SeedSpec(1213, i), vectorized=True).p
    details, ok = [], True
    for alpha in (0.01, 0.05, 0.1):
        rate = np.mean(ps <= alpha)
        band = 3 * np.sqrt(alpha * (1 - alpha) / n_reps)
        ok &= abs(rate - alpha) <= band
        details.append(f"P[p<={alpha}]={rate:.4f}")
    ok = acceptance_log("C12 engine exactness", ok, ", ".join(details) + f" over {n_reps} reps")
    assert ok


def test_c13_degenerate_rewards(acceptance_log):
    cfg = ct.ChoiceConfig(beta=1.0, gamma=0.0)
    n_trials = n_same = 0
    for agent in ("blind", "sighted"):
        for i in range(20):
            session = ct.simulate_choice_session(ct.make_agent(agent), cfg, SeedSpec(1313, i))
            stack = ct.conditional_resample_stimuli(session, rng=np.random.default_rng(i), size=50)
            n_trials += stack.size
            n_same += int(np.count_nonzero(stack == session.stimuli))
    ok = acceptance_log("C13 degeneracy", n_same == n_trials,
                        f"{n_same}/{n_trials} resampled stimuli equal the originals")
    assert ok


def test_c14_replicate_deterministic(replication, acceptance_log):
    again = harness.replicate_paper(N_SESSIONS, N_RESAMPLES)
    identical = all(
        harness.report_json(report) == harness.report_json(replication[row.name][1])
        for row, report in again
    )
    ok = acceptance_log("C14 determinism", identical, "two replicate runs give byte-identical JSON reports")
    assert ok


NULL_ROWS = ["rt_random", "rt_deceleration", "choice_blind_conditional_same_trial",
             "choice_blind_conditional_delayed"]


@pytest.mark.parametrize("name", NULL_ROWS)
def test_null_rows_uniform_at_every_alpha(replication, name):
    _, report = replication[name]
    n = len(report.sessions)
    for alpha, k in report.rejections:
        assert abs(k / n - alpha) <= 3 * np.sqrt(alpha * (1 - alpha) / n), (alpha, k)


def test_tangent_failure_pattern(replication):
    _, delayed = replication["choice_blind_tangent_delayed"]
    _, same = replication["choice_blind_tangent_same_trial"]
    n = len(same.sessions)
    assert delayed.rejection_rate(ALPHA) > 2 * ALPHA
    assert same.rejection_rate(ALPHA) <= ALPHA + 3 * np.sqrt(ALPHA * (1 - ALPHA) / n)

import csv
import json
import time

import numpy as np
import pytest

from crt_lab import harness
from crt_lab.errors import ConfigurationError, ReportWriteError
from crt_lab.harness import ExperimentReport, ExperimentSpec


def small_spec(**kw):
    base = dict(task="choice", scenario="blind", statistic="same_trial", n_sessions=12,
                n_resamples=99, master_seed=5, config_overrides={"n_trials": 120})
    base.update(kw)
    return ExperimentSpec(**base)


@pytest.fixture(scope="module")
def report():
    return harness.run_experiment(small_spec())


@pytest.mark.parametrize(
    "kw",
    [
        dict(task="rt", scenario="random", statistic="mean_rt", resampler="tangent"),
        dict(task="choice", scenario="blind", statistic="mean_rt"),
        dict(task="rt", scenario="random", statistic="same_trial"),
        dict(task="rt", scenario="blind", statistic="mean_rt"),
        dict(task="maze", scenario="blind", statistic="mean_rt"),
        dict(n_sessions=0),
        dict(n_resamples=0),
        dict(alpha_levels=(0.0,)),
        dict(alpha_levels=()),
        dict(config_overrides={"alpha": 1.5}),
        dict(config_overrides={"colour": "red"}),
        dict(scenario_overrides={"rl_rate": -1}),
    ],
)
def test_invalid_specs_rejected_before_work(kw):
    with pytest.raises(ConfigurationError):
        harness.run_experiment(small_spec(**kw))


def test_rejection_counts_match_p_values(report):
    p = report.p_values
    for alpha, k in report.rejections:
        assert k == np.count_nonzero(p <= alpha)
    assert report.rejection_rule == "p <= alpha"


def test_histogram_sums_to_sessions(report):
    assert len(report.hist_counts) == 20
    assert len(report.hist_edges) == 21
    assert sum(report.hist_counts) == report.spec.n_sessions


def test_session_seeds_and_order(report):
    assert [s.session_index for s in report.sessions] == list(range(12))
    assert [s.seed for s in report.sessions] == [2 * i for i in range(12)]


def test_byte_identical_reruns(report):
    again = harness.run_experiment(small_spec())
    assert harness.report_json(again) == harness.report_json(report)


def test_parallel_matches_serial(report):
    parallel = harness.run_experiment(small_spec(), workers=3)
    assert harness.report_json(parallel) == harness.report_json(report)


def test_master_seed_changes_values_not_structure(report):
    other = harness.run_experiment(small_spec(master_seed=6))
    assert [s.p_value for s in other.sessions] != [s.p_value for s in report.sessions]
    assert other.spec.n_sessions == report.spec.n_sessions
    assert len(other.sessions) == len(report.sessions)
    assert [a for a, _ in other.rejections] == [a for a, _ in report.rejections]
    assert other.hist_edges == report.hist_edges


def test_more_resamples_keep_simulated_data():
    a = harness.run_experiment(small_spec(n_resamples=19, n_sessions=4))
    b = harness.run_experiment(small_spec(n_resamples=199, n_sessions=4))
    assert [s.t_obs for s in a.sessions] == [s.t_obs for s in b.sessions]


def test_rt_experiment_runs():
    rep = harness.run_experiment(ExperimentSpec(task="rt", scenario="response", statistic="mean_rt",
                                                n_sessions=5, n_resamples=99))
    assert rep.rejection_rate(0.05) == 1.0


# ---------------------------------------------------------------------------
# emit_report
# ---------------------------------------------------------------------------

def test_json_round_trip(report, tmp_path):
    path = tmp_path / "r.json"
    harness.emit_report(report, "json", path)
    back = ExperimentReport.from_dict(json.loads(path.read_text()))
    assert back == report


def test_json_timing_is_opt_in(report):
    assert "wall_time_s" not in json.loads(harness.report_json(report))
    assert json.loads(harness.report_json(report, include_timing=True))["wall_time_s"] > 0


def test_json_histogram_sums(report, tmp_path):
    path = tmp_path / "r.json"
    harness.emit_report(report, "json", path)
    data = json.loads(path.read_text())
    assert sum(data["histogram"]["counts"]) == data["spec"]["n_sessions"]


def test_csv_two_sessions(tmp_path):
    rep = harness.run_experiment(small_spec(n_sessions=2))
    path = tmp_path / "sessions.csv"
    harness.emit_report(rep, "csv", path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0] == "session_index,seed,t_obs,p_value"
    rows = list(csv.DictReader(open(tmp_path / "sessions_summary.csv")))
    assert [r["alpha"] for r in rows] == ["0.01", "0.05", "0.1"]
    for r in rows:
        assert int(r["n_sessions"]) == 2
        assert float(r["rate"]) == int(r["rejections"]) / 2
    parsed = list(csv.DictReader(open(path)))
    assert [float(r["p_value"]) for r in parsed] == [s.p_value for s in rep.sessions]


def test_csv_to_stdout(report, capsys):
    harness.emit_report(report, "csv")
    out = capsys.readouterr().out
    sessions, summary = out.split("\n\n")
    assert len(sessions.splitlines()) == 13
    assert summary.splitlines()[0] == "alpha,rejections,n_sessions,rate"


def test_unwritable_destination(report, tmp_path):
    bad = tmp_path / "missing" / "dir" / "r.json"
    with pytest.raises(ReportWriteError) as info:
        harness.emit_report(report, "json", bad)
    assert str(bad) in str(info.value)


def test_unknown_format(report):
    with pytest.raises(ConfigurationError):
        harness.emit_report(report, "xml")


# ---------------------------------------------------------------------------
# replication grid
# ---------------------------------------------------------------------------

def test_replication_smoke_mode(tmp_path):
    start = time.perf_counter()
    results = harness.replicate_paper(n_sessions=50)
    elapsed = time.perf_counter() - start
    assert elapsed < 30
    rows = harness.summary_rows(results)
    assert len(rows) == 8
    assert [r["published_per_1000"] for r in rows] == [48, 997, 45, 41, 948, 32, 40, 303]
    table = harness.format_summary(rows)
    assert len(table.splitlines()) == 2 + 8

    harness.write_replication(results, tmp_path / "rep")
    written = sorted(p.name for p in (tmp_path / "rep").iterdir())
    assert "summary.csv" in written and len(written) == 9

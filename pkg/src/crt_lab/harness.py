"""
Batch experiment driver.

An experiment simulates ``n_sessions`` independent sessions of one task
scenario and tests each with one statistic/resampler pair. Session ``i``
simulates from stream ``(master_seed, 2i)`` and tests with stream
``(master_seed, 2i + 1)``, so adding resamples never changes the simulated
data and results do not depend on how sessions are scheduled.
"""
from __future__ import annotations

import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import choice_task, rt_task
from .engine import DEFAULT_RESAMPLES, SeedSpec, derive_stream
from .errors import ConfigurationError, CrtError, InvalidInputError, ReportWriteError, SessionError

N_HIST_BINS = 20
REJECTION_RULE = "p <= alpha"

TASK_STATISTICS = {"rt": ("mean_rt",), "choice": ("same_trial", "delayed")}
TASK_RESAMPLERS = {"rt": ("conditional",), "choice": ("conditional", "tangent")}
TASK_SCENARIOS = {"rt": tuple(rt_task.STRATEGIES), "choice": tuple(choice_task.AGENTS)}


@dataclass(frozen=True)
class ExperimentSpec:
    task: str
    scenario: str
    statistic: str
    resampler: str = "conditional"
    n_sessions: int = 1000
    n_resamples: int = DEFAULT_RESAMPLES
    alpha_levels: tuple[float, ...] = (0.01, 0.05, 0.1)
    master_seed: int = 0
    config_overrides: dict = field(default_factory=dict)
    scenario_overrides: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentSpec":
        if self.task not in TASK_SCENARIOS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        if self.scenario not in TASK_SCENARIOS[self.task]:
            raise ConfigurationError(
                f"scenario {self.scenario!r} is not available for task {self.task!r}; "
                f"choose from {TASK_SCENARIOS[self.task]}"
            )
        if self.statistic not in TASK_STATISTICS[self.task]:
            raise ConfigurationError(
                f"statistic {self.statistic!r} does not apply to task {self.task!r}"
            )
        if self.resampler not in TASK_RESAMPLERS[self.task]:
            raise ConfigurationError(
                f"resampler {self.resampler!r} does not apply to task {self.task!r}"
            )
        if self.n_sessions < 1 or self.n_resamples < 1:
            raise ConfigurationError("n_sessions and n_resamples must be >= 1")
        if not self.alpha_levels or not all(0 < a < 1 for a in self.alpha_levels):
            raise ConfigurationError(f"alpha levels must lie in (0, 1): {self.alpha_levels}")
        if self.master_seed < 0:
            raise ConfigurationError("master_seed must be non-negative")
        try:
            self.build()
        except (InvalidInputError, TypeError) as exc:
            raise ConfigurationError(f"bad override: {exc}") from exc
        return self

    def build(self):
        """Instantiate ``(config, scenario)`` with overrides applied."""
        if self.task == "rt":
            config = rt_task.RtConfig(**self.config_overrides)
            scenario = rt_task.make_strategy(self.scenario, **self.scenario_overrides)
        else:
            config = choice_task.ChoiceConfig(**self.config_overrides)
            scenario = choice_task.make_agent(self.scenario, **self.scenario_overrides)
        return config, scenario

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha_levels"] = list(self.alpha_levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        d["alpha_levels"] = tuple(d["alpha_levels"])
        return cls(**d)


@dataclass(frozen=True)
class SessionResult:
    session_index: int
    seed: int  # simulation stream index; the test stream is seed + 1
    t_obs: float
    p_value: float


@dataclass(frozen=True)
class ExperimentReport:
    spec: ExperimentSpec
    sessions: tuple[SessionResult, ...]
    rejections: tuple[tuple[float, int], ...]
    hist_edges: tuple[float, ...]
    hist_counts: tuple[int, ...]
    rejection_rule: str = REJECTION_RULE
    wall_time_s: float | None = field(default=None, compare=False)

    @property
    def p_values(self) -> np.ndarray:
        return np.array([s.p_value for s in self.sessions])

    def rejection_rate(self, alpha: float) -> float:
        return dict(self.rejections)[alpha] / len(self.sessions)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "spec": self.spec.to_dict(),
            "rejection_rule": self.rejection_rule,
            "sessions": [asdict(s) for s in self.sessions],
            "rejections": [
                {"alpha": a, "rejections": k, "n_sessions": len(self.sessions)}
                for a, k in self.rejections
            ],
            "histogram": {"edges": list(self.hist_edges), "counts": list(self.hist_counts)},
        }
        if include_timing:
            d["wall_time_s"] = self.wall_time_s
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(
            spec=ExperimentSpec.from_dict(d["spec"]),
            sessions=tuple(SessionResult(**s) for s in d["sessions"]),
            rejections=tuple((r["alpha"], r["rejections"]) for r in d["rejections"]),
            hist_edges=tuple(d["histogram"]["edges"]),
            hist_counts=tuple(d["histogram"]["counts"]),
            rejection_rule=d["rejection_rule"],
            wall_time_s=d.get("wall_time_s"),
        )


def run_session(spec: ExperimentSpec, index: int) -> SessionResult:
    """Simulate and test one session of ``spec``."""
    config, scenario = spec.build()
    sim_seed = SeedSpec(spec.master_seed, 2 * index)
    test_seed = SeedSpec(spec.master_seed, 2 * index + 1)
    try:
        if spec.task == "rt":
            session = rt_task.simulate_rt_session(scenario, config, derive_stream(sim_seed))
            outcome = rt_task.rt_crt(session, spec.n_resamples, test_seed)
        else:
            session = choice_task.simulate_choice_session(scenario, config, sim_seed)
            outcome = choice_task.choice_crt(
                session, spec.statistic, spec.resampler, spec.n_resamples, test_seed
            )
    except CrtError as exc:
        raise SessionError(index, exc) from exc
    return SessionResult(index, sim_seed.stream_index, outcome.t_obs, outcome.p)


def _run_chunk(spec, indices):
    return [run_session(spec, i) for i in indices]


def summarize(spec: ExperimentSpec, results, wall_time_s=None) -> ExperimentReport:
    results = tuple(sorted(results, key=lambda r: r.session_index))
    p = np.array([r.p_value for r in results])
    rejections = tuple((a, int(np.count_nonzero(p <= a))) for a in spec.alpha_levels)
    counts, edges = np.histogram(p, bins=N_HIST_BINS, range=(0.0, 1.0))
    return ExperimentReport(
        spec=spec,
        sessions=results,
        rejections=rejections,
        hist_edges=tuple(float(e) for e in edges),
        hist_counts=tuple(int(c) for c in counts),
        wall_time_s=wall_time_s,
    )


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> ExperimentReport:
    """Run every session of ``spec`` and aggregate the p-values.

    ``workers > 1`` fans sessions out to worker processes; the report is
    the same either way.
    """
    spec.validate()
    start = time.perf_counter()
    indices = range(spec.n_sessions)
    if workers <= 1:
        results = [run_session(spec, i) for i in indices]
    else:
        chunks = [indices[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [spec] * len(chunks), chunks)
            results = [r for part in parts for r in part]
    return summarize(spec, results, wall_time_s=time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _sessions_csv(report, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["session_index", "seed", "t_obs", "p_value"])
    for s in report.sessions:
        w.writerow([s.session_index, s.seed, repr(s.t_obs), repr(s.p_value)])


def _summary_csv(report, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["alpha", "rejections", "n_sessions", "rate"])
    n = len(report.sessions)
    for a, k in report.rejections:
        w.writerow([repr(a), k, n, repr(k / n)])


def report_json(report: ExperimentReport, include_timing: bool = False) -> str:
    return json.dumps(report.to_dict(include_timing), indent=2) + "\n"


def summary_path(path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_summary.csv")


def emit_report(report: ExperimentReport, fmt: str = "json", destination=None,
                include_timing: bool = False) -> None:
    """Write a report as JSON, or as a per-session CSV plus a summary CSV.

    With a file destination the summary goes to ``<stem>_summary.csv``
    beside it. Without one, everything goes to standard output and the
    summary follows the session rows after a blank line.
    """
    if fmt == "json":
        parts = {destination: report_json(report, include_timing)}
    elif fmt == "csv":
        rows, summary = io.StringIO(), io.StringIO()
        _sessions_csv(report, rows)
        _summary_csv(report, summary)
        if destination is None:
            parts = {None: rows.getvalue() + "\n" + summary.getvalue()}
        else:
            parts = {destination: rows.getvalue(), summary_path(destination): summary.getvalue()}
    else:
        raise ConfigurationError(f"unknown report format {fmt!r}")

    for dest, text in parts.items():
        if dest is None:
            sys.stdout.write(text)
            continue
        try:
            Path(dest).write_text(text)
        except OSError as exc:
            raise ReportWriteError(dest, exc) from exc


# ---------------------------------------------------------------------------
# Replication grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridRow:
    name: str
    task: str
    scenario: str
    statistic: str
    resampler: str
    published_per_1000: int
    band: tuple[float, float]  # acceptance band on the rejection rate at alpha = 0.05


REPLICATION_GRID = (
    GridRow("rt_random", "rt", "random", "mean_rt", "conditional", 48, (0.032, 0.068)),
    GridRow("rt_response", "rt", "response", "mean_rt", "conditional", 997, (0.95, 1.0)),
    GridRow("rt_deceleration", "rt", "deceleration", "mean_rt", "conditional", 45, (0.032, 0.068)),
    GridRow("choice_blind_conditional_same_trial", "choice", "blind", "same_trial", "conditional", 41, (0.032, 0.068)),
    GridRow("choice_sighted_conditional_same_trial", "choice", "sighted", "same_trial", "conditional", 948, (0.80, 1.0)),
    GridRow("choice_blind_tangent_same_trial", "choice", "blind", "same_trial", "tangent", 32, (0.0, 0.068)),
    GridRow("choice_blind_conditional_delayed", "choice", "blind", "delayed", "conditional", 40, (0.032, 0.068)),
    GridRow("choice_blind_tangent_delayed", "choice", "blind", "delayed", "tangent", 303, (0.15, 1.0)),
)
REPLICATION_SEED = 20231101
REPLICATION_ALPHA = 0.05


def replicate_paper(n_sessions: int = 1000, n_resamples: int = DEFAULT_RESAMPLES,
                    master_seed: int = REPLICATION_SEED, workers: int = 1):
    """Run the full grid; row ``k`` uses master seed ``master_seed + k``.

    Returns a list of ``(GridRow, ExperimentReport)`` pairs in grid order.
    """
    out = []
    for k, row in enumerate(REPLICATION_GRID):
        spec = ExperimentSpec(
            task=row.task, scenario=row.scenario, statistic=row.statistic,
            resampler=row.resampler, n_sessions=n_sessions, n_resamples=n_resamples,
            master_seed=master_seed + k,
        )
        out.append((row, run_experiment(spec, workers=workers)))
    return out


def summary_rows(results) -> list[dict]:
    rows = []
    for row, report in results:
        rate = report.rejection_rate(REPLICATION_ALPHA)
        lo, hi = row.band
        rows.append({
            "name": row.name,
            "published_per_1000": row.published_per_1000,
            "rejections": dict(report.rejections)[REPLICATION_ALPHA],
            "n_sessions": len(report.sessions),
            "rate": rate,
            "band_lo": lo,
            "band_hi": hi,
            "pass": lo <= rate <= hi,
        })
    return rows


def format_summary(rows) -> str:
    header = f"{'experiment':40s} {'published/1000':>14s} {'obtained':>12s} {'rate':>7s}  {'band':15s} result"
    lines = [header, "-" * len(header)]
    for r in rows:
        obtained = f"{r['rejections']}/{r['n_sessions']}"
        band = f"[{r['band_lo']:.3f}, {r['band_hi']:.3f}]"
        verdict = "PASS" if r["pass"] else "FAIL"
        lines.append(
            f"{r['name']:40s} {r['published_per_1000']:>14d} {obtained:>12s} {r['rate']:7.3f}  {band:15s} {verdict}"
        )
    return "\n".join(lines)


def write_replication(results, out_dir) -> None:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportWriteError(out_dir, exc) from exc
    for row, report in results:
        emit_report(report, "json", out_dir / f"{row.name}.json")
    rows = summary_rows(results)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    try:
        (out_dir / "summary.csv").write_text(buf.getvalue())
    except OSError as exc:
        raise ReportWriteError(out_dir / "summary.csv", exc) from exc

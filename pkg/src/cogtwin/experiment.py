"""Batches of independent evolution runs and their summary statistics."""
from __future__ import annotations

import csv
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .evo.run import EvoConfig, FitnessReport, evolve_inprocess, make_problem, run_evolution

log = logging.getLogger(__name__)

REPORT_COLUMNS = ["run_id", "score", "generations", "n_perceptuals", "n_behaviorals",
                  "n_internals", "genome"]
METRICS = {"score": "score", "generations": "generations_used",
           "n_perceptuals": "n_perceptual_active", "n_behaviorals": "n_behavioral_active",
           "n_internals": "n_internal"}
HISTOGRAMS = {"score": "hist_score.csv", "generations": "hist_generations.csv",
              "n_perceptuals": "hist_perceptuals.csv", "n_behaviorals": "hist_behaviorals.csv"}
ERROR_MARKER = "ERROR"

# spawn-key streams, see docs/seeds.md
STREAMS = {"prefs": 0, "data": 1, "pool": 2, "es": 3}


def run_seeds(master_seed, run_id):
    """Independent 63-bit seeds for one run, derived from ``(master_seed, run_id)``."""
    out = {}
    for name, stream in STREAMS.items():
        ss = np.random.SeedSequence(master_seed, spawn_key=(run_id, stream))
        out[name] = int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
    return out


def run_config(base: EvoConfig, master_seed, run_id) -> EvoConfig:
    s = run_seeds(master_seed, run_id)
    return replace(base, prefs_seed=s["prefs"], data_seed=s["data"], pool_seed=s["pool"],
                   es_seed=s["es"])


@dataclass
class RunResult:
    run_id: int
    report: FitnessReport | None = None
    error: str | None = None

    @property
    def ok(self):
        return self.report is not None


def _inprocess_job(args):
    run_id, cfg = args
    try:
        return RunResult(run_id, evolve_inprocess(cfg))
    except Exception as exc:  # noqa: BLE001 - one bad run must not sink the batch
        log.exception("run %d failed", run_id)
        return RunResult(run_id, error=f"{type(exc).__name__}: {exc}")


def run_batch(n_runs, master_seed, base: EvoConfig | None = None, jobs=1, mode="inprocess",
              cluster=None, progress=None):
    """``n_runs`` independent evolutions; results come back ordered by run id.

    Distributed mode runs sequentially on one live agent (``cluster``, a started
    :class:`~cogtwin.evo.cluster.LocalCluster` or anything with ``.nodes`` and
    an environment address); reconfiguration rewires it for each run's pool.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    base = base or EvoConfig()
    tasks = [(i, run_config(base, master_seed, i)) for i in range(n_runs)]
    if mode == "inprocess":
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                results = list(ex.map(_inprocess_job, tasks))
        else:
            results = []
            for t in tasks:
                results.append(_inprocess_job(t))
                if progress:
                    progress(results[-1])
        return sorted(results, key=lambda r: r.run_id)
    if mode != "distributed":
        raise ValueError(f"unknown mode {mode!r}")
    if cluster is None:
        raise ValueError("distributed mode needs a running cluster")
    from .evo.distributed import DistributedAgent

    results = []
    for run_id, cfg in tasks:
        try:
            pool, _, dataset = make_problem(cfg)
            agent = DistributedAgent(pool, dataset, cluster.nodes, cluster.env_address)
            try:
                report = run_evolution(agent, pool.genome_length, len(pool.perceptual), cfg)
            finally:
                agent.close()
            results.append(RunResult(run_id, report))
        except Exception as exc:  # noqa: BLE001
            log.exception("run %d failed", run_id)
            results.append(RunResult(run_id, error=f"{type(exc).__name__}: {exc}"))
        if progress:
            progress(results[-1])
    return results


def write_reports(results, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in results:
            if r.ok:
                rep = r.report
                w.writerow([r.run_id, rep.score, rep.generations_used, rep.n_perceptual_active,
                            rep.n_behavioral_active, rep.n_internal, rep.genome])
            else:
                w.writerow([r.run_id, ERROR_MARKER, "", "", "", "", ""])


def read_reports(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["score"] == ERROR_MARKER:
                out.append(RunResult(int(row["run_id"]), error="recorded failure"))
                continue
            out.append(RunResult(int(row["run_id"]), FitnessReport(
                score=int(row["score"]), generations_used=int(row["generations"]),
                n_perceptual_active=int(row["n_perceptuals"]),
                n_behavioral_active=int(row["n_behaviorals"]), genome=row["genome"])))
    return out


# -- statistics ---------------------------------------------------------------


class SummaryError(ValueError):
    pass


@dataclass
class ExperimentStats:
    n_runs: int
    metrics: dict                   # metric -> {mean, median, std, min, max}
    correlations: dict              # count metric -> Pearson r against score
    histograms: dict = field(default_factory=dict)   # metric -> [(bin, count)]
    fraction_score_le_2: float = 0.0


def _reports(items):
    reps = [r.report if isinstance(r, RunResult) else r for r in items]
    return [r for r in reps if r is not None]


def metric_values(reports, metric):
    return [getattr(r, METRICS[metric]) for r in reports]


def pearson(x, y):
    """Pearson r; NaN when either variable is constant."""
    n = len(x)
    if n < 2:
        return math.nan
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return math.nan
    return sxy / math.sqrt(sxx * syy)


def histogram(values):
    """One bin per integer from min to max, empty bins included."""
    counts = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return [(b, counts.get(b, 0)) for b in range(min(values), max(values) + 1)]


def summarize(items) -> ExperimentStats:
    reports = _reports(items)
    if not reports:
        raise SummaryError("no completed runs to summarize")
    metrics = {}
    for m in METRICS:
        v = metric_values(reports, m)
        metrics[m] = {"mean": statistics.fmean(v), "median": statistics.median(v),
                      "std": statistics.pstdev(v), "min": min(v), "max": max(v)}
    scores = metric_values(reports, "score")
    corr = {m: pearson(metric_values(reports, m), scores)
            for m in ("n_perceptuals", "n_behaviorals")}
    hists = {m: histogram(metric_values(reports, m)) for m in HISTOGRAMS}
    frac = sum(s <= 2 for s in scores) / len(scores)
    return ExperimentStats(len(reports), metrics, corr, hists, frac)


def emit_histograms(items, out_dir):
    """Plot-ready CSVs: one histogram per metric, correlations and the summary table."""
    stats = summarize(items)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for m, name in HISTOGRAMS.items():
        path = out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin", "count"])
            w.writerows(stats.histograms[m])
        written.append(path)
    path = out / "corr.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "r"])
        for m, r in stats.correlations.items():
            w.writerow([m, repr(r)])
    written.append(path)
    path = out / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "mean", "median", "std", "min", "max"])
        for m, s in stats.metrics.items():
            w.writerow([m] + [repr(float(s[k])) for k in ("mean", "median", "std", "min", "max")])
        w.writerow([])
        w.writerow(["n_runs", stats.n_runs])
        w.writerow(["fraction_score_le_2", repr(stats.fraction_score_le_2)])
    written.append(path)
    return written


def format_stats(stats: ExperimentStats) -> str:
    lines = [f"{'metric':<14}{'mean':>9}{'median':>9}{'std':>9}{'min':>7}{'max':>7}"]
    for m, s in stats.metrics.items():
        lines.append(f"{m:<14}{s['mean']:>9.3f}{s['median']:>9.1f}{s['std']:>9.3f}"
                     f"{s['min']:>7}{s['max']:>7}")
    for m, r in stats.correlations.items():
        lines.append(f"pearson({m}, score) = {r:.3f}")
    lines.append(f"runs with score <= 2: {stats.fraction_score_le_2:.1%} of {stats.n_runs}")
    return "\n".join(lines)

import csv
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogtwin.evo.run import EvoConfig, FitnessReport
from cogtwin.experiment import (REPORT_COLUMNS, RunResult, SummaryError, emit_histograms,
                                histogram, pearson, read_reports, run_batch, run_config,
                                run_seeds, summarize, write_reports)

SMALL = EvoConfig(n_samples=120, max_generations=2, pop_size=6)


def _rep(score, np_=1, nb=1, gens=20):
    genome = "1" * np_ + "0" * (15 - np_) + "1" * nb + "0" * (13 - nb)
    return FitnessReport(score, gens, np_, nb, genome)


def test_two_run_summary():
    stats = summarize([_rep(0), _rep(2)])
    s = stats.metrics["score"]
    assert (s["mean"], s["median"], s["std"], s["min"], s["max"]) == (1, 1, 1, 0, 2)
    assert stats.fraction_score_le_2 == 1.0


def test_single_run_summary():
    stats = summarize([_rep(7, 3, 4)])
    assert stats.metrics["score"]["std"] == 0
    assert stats.metrics["n_internals"]["mean"] == 7
    assert math.isnan(stats.correlations["n_perceptuals"])


def test_empty_summary_is_an_error():
    with pytest.raises(SummaryError):
        summarize([])
    with pytest.raises(SummaryError):
        summarize([RunResult(0, error="boom")])


reports = st.lists(st.builds(_rep, st.integers(0, 260), st.integers(0, 15), st.integers(0, 13),
                             st.integers(0, 20)), min_size=1, max_size=40)


@settings(max_examples=200, deadline=None)
@given(reports)
def test_summary_matches_numpy(reps):
    stats = summarize(reps)
    cols = {"score": [r.score for r in reps],
            "generations": [r.generations_used for r in reps],
            "n_perceptuals": [r.n_perceptual_active for r in reps],
            "n_behaviorals": [r.n_behavioral_active for r in reps],
            "n_internals": [r.n_perceptual_active + r.n_behavioral_active for r in reps]}
    for m, v in cols.items():
        s = stats.metrics[m]
        assert s["mean"] == pytest.approx(np.mean(v), abs=1e-9)
        assert s["median"] == pytest.approx(np.median(v), abs=1e-9)
        assert s["std"] == pytest.approx(np.std(v), abs=1e-9)
        assert (s["min"], s["max"]) == (min(v), max(v))
    for m in ("n_perceptuals", "n_behaviorals"):
        r = stats.correlations[m]
        if np.std(cols[m]) == 0 or np.std(cols["score"]) == 0:
            assert math.isnan(r)
        else:
            assert r == pytest.approx(np.corrcoef(cols[m], cols["score"])[0, 1], abs=1e-9)
    assert stats.fraction_score_le_2 == pytest.approx(np.mean(np.array(cols["score"]) <= 2))


@given(st.lists(st.integers(-5, 30), min_size=1, max_size=60))
def test_histogram_mass_and_coverage(values):
    h = histogram(values)
    assert sum(c for _, c in h) == len(values)
    assert [b for b, _ in h] == list(range(min(values), max(values) + 1))
    assert all(c == values.count(b) for b, c in h)


def test_pearson_edge_cases():
    assert math.isnan(pearson([1], [2]))
    assert math.isnan(pearson([3, 3, 3], [1, 2, 3]))
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_run_seeds_follow_spawn_keys():
    for master, run in ((0, 0), (0, 7), (12345, 3)):
        seeds = run_seeds(master, run)
        for stream, name in enumerate(("prefs", "data", "pool", "es")):
            ss = np.random.SeedSequence(master, spawn_key=(run, stream))
            assert seeds[name] == int(ss.generate_state(1, np.uint64)[0]) >> 1
            assert 0 <= seeds[name] < 2**63
    all_seeds = [v for i in range(50) for v in run_seeds(0, i).values()]
    assert len(set(all_seeds)) == len(all_seeds)
    cfg = run_config(SMALL, 0, 4)
    assert cfg.pool_seed == run_seeds(0, 4)["pool"] and cfg.max_generations == 2


def test_batch_reproducible_and_ordered(tmp_path):
    a = run_batch(3, 11, SMALL)
    b = run_batch(3, 11, SMALL, jobs=2)
    assert [r.run_id for r in a] == [0, 1, 2]
    assert [r.report for r in a] == [r.report for r in b]
    for name, res in (("a", a), ("b", b)):
        write_reports(res, tmp_path / f"{name}.csv")
        emit_histograms(res, tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    for f in ("hist_score.csv", "corr.csv", "summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_report_round_trip_and_error_rows(tmp_path):
    results = [RunResult(0, _rep(4, 2, 3)), RunResult(1, error="node down")]
    write_reports(results, tmp_path / "r.csv")
    with open(tmp_path / "r.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == REPORT_COLUMNS
    assert rows[1] == ["0", "4", "20", "2", "3", "5", _rep(4, 2, 3).genome]
    assert rows[2][:2] == ["1", "ERROR"]
    back = read_reports(tmp_path / "r.csv")
    assert back[0].report == results[0].report and not back[1].ok


def test_histogram_files(tmp_path):
    paths = emit_histograms([_rep(1, 2), _rep(4, 2), _rep(4, 5)], tmp_path)
    assert sorted(p.name for p in paths) == sorted(
        ["hist_score.csv", "hist_generations.csv", "hist_perceptuals.csv",
         "hist_behaviorals.csv", "corr.csv", "summary.csv"])
    lines = (tmp_path / "hist_score.csv").read_text().split()
    assert lines == ["bin,count", "1,1", "2,0", "3,0", "4,2"]
    assert "fraction_score_le_2,0.3333333333333333" in (tmp_path / "summary.csv").read_text()


def test_cli_experiment_smoke(tmp_path):
    out = tmp_path / "exp"
    proc = subprocess.run(
        [sys.executable, "-m", "cogtwin", "--log-level", "WARNING", "experiment",
         "--runs", "2", "--seed", "3", "--gens", "1", "--pop", "6", "--samples", "120",
         "--out", str(out)], capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert "2/2 runs completed" in proc.stdout
    for f in ("report.csv", "summary.csv", "corr.csv", "hist_score.csv"):
        assert (out / f).exists()
    assert len(read_reports(out / "report.csv")) == 2


def test_cli_evolve_and_layout(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "cogtwin", "evolve", "--gens", "1", "--pop", "6",
         "--samples", "120"], capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert '"genome"' in proc.stdout
    proc = subprocess.run(
        [sys.executable, "-m", "cogtwin", "layout", "--env", "127.0.0.1:7000",
         "--out", str(tmp_path / "nodes.json")], capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.split("\n")[0].split("\t")[2] == "20 codelets"

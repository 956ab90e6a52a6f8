"""
Tests for ensemble execution, aggregation and output files
"""
import csv
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from trfree.exceptions import ConfigError
from trfree.models import Mode, OutputFormat, RunConfig
from trfree.services import ensemble

CHECKPOINT_COLUMNS = [
    "run_id",
    "i",
    "t",
    "open_count",
    "q_pred",
    "ce_mean",
    "ce_min",
    "ce_max",
    "c_pred",
    "max_deg_rm1",
    "deg_pred",
    "max_codeg",
]


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def read_bytes(directory):
    return {
        path.name: path.read_bytes() for path in sorted(Path(directory).iterdir())
    }


def make_config(out_dir, **overrides):
    values = {"n": 12, "r": 3, "runs": 3, "master_seed": 7, "output_path": out_dir}
    values.update(overrides)
    return ensemble.load_run_config(values)


def test_invalid_config_is_rejected(out_dir):
    """Bad fields fail before any run and carry the field messages."""
    with pytest.raises(ConfigError) as excinfo:
        ensemble.load_run_config({"n": 10, "r": 3, "runs": 0, "mode": "nope"})
    assert set(excinfo.value.errors) == {"runs", "mode"}
    with pytest.raises(ConfigError):
        ensemble.load_run_config({"n": 3, "r": 4})
    with pytest.raises(ConfigError):
        ensemble.load_run_config({"n": 10, "r": 3, "constants": {"zeta": 0}})
    assert not os.path.exists(out_dir)


def test_unwritable_output_path(tmp_path):
    """An output path under a regular file is reported as a configuration error."""
    blocker = tmp_path / "file"
    blocker.write_text("x")
    config = make_config(str(blocker / "out"))
    with pytest.raises(ConfigError):
        ensemble.run_ensemble(config)


def test_oracle_mode_respects_ceiling(out_dir):
    """oracle-test refuses n above ORACLE_MAX_N before running."""
    config = make_config(out_dir, n=13, mode="oracle-test")
    with pytest.raises(ConfigError):
        ensemble.run_ensemble(config)


def test_trajectory_outputs(out_dir):
    """Trajectory mode writes the manifest, the checkpoints and their aggregate."""
    result = ensemble.run_ensemble(make_config(out_dir))
    assert result.exit_code == 0
    assert result.files == ["manifest.json", "checkpoints.csv", "aggregate.csv"]

    with open(os.path.join(out_dir, "checkpoints.csv"), encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n")
    assert header.split(",") == CHECKPOINT_COLUMNS

    rows = read_csv(os.path.join(out_dir, "checkpoints.csv"))
    assert [int(row["run_id"]) for row in rows] == sorted(int(row["run_id"]) for row in rows)
    first = rows[0]
    assert (first["i"], first["open_count"], first["max_deg_rm1"]) == ("0", "220", "0")

    manifest = json.load(open(os.path.join(out_dir, "manifest.json"), encoding="utf-8"))
    assert manifest["tool"] == "trfree"
    assert manifest["model"]["N"] == 220
    assert manifest["config"]["mode"] == "trajectory"
    assert [run["run_id"] for run in manifest["runs"]] == [0, 1, 2]
    assert all(run["i_reached"] <= manifest["model"]["i_max"] for run in manifest["runs"])


def test_real_formatting(out_dir):
    """Reals are written with 17 significant digits and LF line endings."""
    ensemble.run_ensemble(make_config(out_dir, runs=1))
    raw = Path(out_dir, "checkpoints.csv").read_bytes()
    assert b"\r\n" not in raw
    rows = read_csv(os.path.join(out_dir, "checkpoints.csv"))
    model = ensemble.scaling(12, 3)
    assert rows[1]["t"] == format(model.t(int(rows[1]["i"])), ".17g")


def test_aggregate_matches_raw_rows(out_dir):
    """Aggregate rows equal a recomputation from the checkpoint rows."""
    ensemble.run_ensemble(make_config(out_dir, runs=4, drive_to_termination=True))
    rows = read_csv(os.path.join(out_dir, "checkpoints.csv"))
    aggregate = read_csv(os.path.join(out_dir, "aggregate.csv"))
    assert [int(row["i"]) for row in aggregate] == sorted({int(row["i"]) for row in rows})
    for agg in aggregate:
        group = [row for row in rows if row["i"] == agg["i"]]
        assert int(agg["runs"]) == len(group)
        values = np.array([float(row["open_count"]) for row in group])
        assert float(agg["open_count_mean"]) == pytest.approx(values.mean(), rel=1e-15)
        assert float(agg["open_count_std"]) == pytest.approx(values.std(), abs=1e-12)
        assert float(agg["open_count_min"]) == values.min()
        codeg = np.array([float(row["max_codeg"]) for row in group])
        assert float(agg["max_codeg_max"]) == codeg.max()


def test_aggregate_carries_band_edges(out_dir):
    """Aggregate rows bracket q_pred and c_pred by the open and C_e bands."""
    result = ensemble.run_ensemble(make_config(out_dir, runs=2))
    model = result.model
    aggregate = read_csv(os.path.join(out_dir, "aggregate.csv"))
    for agg in aggregate:
        q_pred, c_pred = float(agg["q_pred"]), float(agg["c_pred"])
        assert float(agg["q_lower"]) == pytest.approx(q_pred - model.open_band)
        assert float(agg["q_upper"]) == pytest.approx(q_pred + model.open_band)
        assert float(agg["c_lower"]) == pytest.approx(c_pred - model.ce_band)
        assert float(agg["c_upper"]) == pytest.approx(c_pred + model.ce_band)


def test_drive_to_termination_records_M(out_dir):
    """Runs driven to the end report M and end with no open r-sets."""
    result = ensemble.run_ensemble(make_config(out_dir, drive_to_termination=True))
    for outcome in result.outcomes:
        assert outcome.M == outcome.i_reached
        assert outcome.checkpoints[-1].open_count == 0
    assert result.summary["M_min"] <= result.summary["M_mean"] <= result.summary["M_max"]


@pytest.mark.parametrize("mode", ["trajectory", "independence"])
def test_no_copy_fits_on_few_vertices(out_dir, mode):
    """With n < 2r - 1 nothing ever closes, so every run adds all N r-sets."""
    result = ensemble.run_ensemble(make_config(out_dir, n=4, r=3, mode=mode))
    assert result.model.i_max == 4
    for outcome in result.outcomes:
        assert outcome.M == 4
        final = outcome.checkpoints[-1]
        assert (final.i, final.open_count, final.edges_count) == (4, 0, 4)
        assert all(record.t == 0 for record in outcome.checkpoints)
        assert all(sum(record.ce_samples) == 0 for record in outcome.checkpoints)


def test_byte_identical_reruns(out_dir):
    """The same config and seed produce the same bytes."""
    config = make_config(out_dir, mode="martingale", runs=2)
    ensemble.run_ensemble(config)
    first = read_bytes(out_dir)
    ensemble.run_ensemble(config)
    assert read_bytes(out_dir) == first


def test_parallel_matches_serial(out_dir):
    """A process pool writes the same files as a serial run."""
    config = make_config(out_dir, runs=4, drive_to_termination=True)
    ensemble.run_ensemble(config, workers=1)
    serial = read_bytes(out_dir)
    ensemble.run_ensemble(config, workers=2)
    assert read_bytes(out_dir) == serial


def test_martingale_outputs(out_dir):
    """Martingale mode adds long-format traces and a per-sequence summary."""
    config = make_config(out_dir, mode="martingale", tracked_A_count=3, tracked_pair_count=2)
    result = ensemble.run_ensemble(config)
    assert "martingale_traces.csv" in result.files
    traces = read_csv(os.path.join(out_dir, "martingale_traces.csv"))
    summary = read_csv(os.path.join(out_dir, "martingale_summary.csv"))
    kinds = {row["kind"] for row in traces}
    assert kinds <= {"set", "pair"} and "set" in kinds
    zero = [row for row in traces if row["i"] == "0" and row["kind"] == "set"]
    assert len(zero) == 3 * config.runs
    assert all(row["Q"] == "10" for row in zero)
    assert {row["sequence"] for row in summary} >= {"Y_plus", "Y_minus", "Z"}


def test_independence_outputs(out_dir):
    """Independence mode reports alpha at i_max and at termination."""
    config = make_config(out_dir, mode="independence", runs=2, drive_to_termination=True)
    result = ensemble.run_ensemble(config)
    rows = read_csv(os.path.join(out_dir, "independence.csv"))
    assert [(row["run_id"], row["stage"]) for row in rows] == [
        ("0", "i_max"),
        ("0", "terminal"),
        ("1", "i_max"),
        ("1", "terminal"),
    ]
    for row in rows:
        assert row["exact"] == "true"
        assert int(row["greedy"]) <= int(row["alpha"])
    assert "alpha_ratio_mean_terminal" in result.summary


def test_subgraph_frequency_mode(out_dir):
    """subgraph-freq writes one row comparing the hit rate with (j/N)^L."""
    config = make_config(out_dir, mode="subgraph-freq", runs=50, pattern_size=2, pattern_step=40)
    result = ensemble.run_ensemble(config)
    (row,) = read_csv(os.path.join(out_dir, "subgraph_frequency.csv"))
    assert (row["L"], row["j"], row["runs"]) == ("2", "40", "50")
    assert float(row["predicted_p"]) == pytest.approx((40 / 220) ** 2)
    assert result.files == ["manifest.json", "subgraph_frequency.csv"]


def test_pattern_must_fit():
    """More disjoint r-sets than the vertex set holds is a configuration error."""
    with pytest.raises(ConfigError):
        ensemble.load_run_config({"n": 8, "r": 3, "mode": "subgraph-freq", "pattern_size": 3})


def test_oracle_mode_passes(out_dir):
    """n=8, r=3: every per-step comparison with the oracle holds."""
    config = make_config(out_dir, n=8, mode="oracle-test", runs=4, oracle_checkpoints=4)
    result = ensemble.run_ensemble(config)
    assert result.exit_code == 0
    rows = read_csv(os.path.join(out_dir, "oracle_report.csv"))
    assert len(rows) == 4
    for row in rows:
        assert row["mismatches"] == "0"
        assert row["maximal"] == "true"
        assert int(row["steps_checked"]) == int(row["M"]) + 1


def test_json_format(out_dir):
    """JSON output mirrors the CSV records with None for missing values."""
    config = make_config(out_dir, runs=1, format="json", drive_to_termination=True)
    ensemble.run_ensemble(config)
    records = json.load(open(os.path.join(out_dir, "checkpoints.json"), encoding="utf-8"))
    assert list(records[0]) == CHECKPOINT_COLUMNS
    assert records[-1]["open_count"] == 0
    assert records[-1]["ce_mean"] is None


def test_run_config_object_is_accepted(out_dir):
    """run_ensemble also takes a RunConfig built in code."""
    config = RunConfig(n=9, r=3, runs=1, output_path=out_dir, format=OutputFormat.json)
    result = ensemble.run_ensemble(config)
    assert result.config.mode is Mode.trajectory
    assert result.files[1] == "checkpoints.json"


@pytest.mark.slow
def test_oracle_acceptance(tmp_path):
    """n in {6, 8, 10}, r in {2, 3}, 50 runs each: no oracle mismatch."""
    for n in (6, 8, 10):
        for r in (2, 3):
            directory = str(tmp_path / f"{n}-{r}")
            config = make_config(directory, n=n, r=r, runs=50, mode="oracle-test")
            assert ensemble.run_ensemble(config).exit_code == 0


@pytest.mark.slow
@pytest.mark.parametrize("n, r", [(40, 3), (100, 2)])
def test_trajectories_track_predictions(tmp_path, n, r):
    """Ensembles run to t = 1.5 keep |O(i)| near q(t) N; r = 3 also keeps |C_e| near c(t) D^(1/r)."""
    model = ensemble.scaling(n, r)
    i_max = math.ceil(1.5 * model.time_scale)
    config = make_config(str(tmp_path), n=n, r=r, runs=50, i_max_override=i_max)
    result = ensemble.run_ensemble(config)
    aggregate = ensemble.aggregate_checkpoints(
        [record for outcome in result.outcomes for record in outcome.checkpoints]
    )
    rows = [row for row in aggregate if row["t"] <= 1.5 and row["runs"] == 50]
    assert rows[-1]["t"] > 1.0
    for row in rows:
        gap = abs(row["open_count_mean"] - row["q_pred"])
        if r == 3:
            assert gap <= 0.15 * row["q_pred"]
            if 0.5 <= row["t"] and row["ce_mean_mean"] is not None:
                assert abs(row["ce_mean_mean"] - row["c_pred"]) <= 0.25 * row["c_pred"]
        else:
            assert gap <= model.open_band

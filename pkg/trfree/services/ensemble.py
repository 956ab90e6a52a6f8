"""Seeded ensemble execution and output emission.

``run_ensemble`` validates a RunConfig, checks the output directory, executes
``runs`` independent processes (serially or on a process pool) and writes the
manifest, the checkpoint rows, their aggregate and the mode-specific tables.
Records are always collected and written in run_id order, so serial and parallel
execution produce the same bytes.
"""
import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from marshmallow import ValidationError

from trfree import __version__
from trfree.exceptions import ConfigError
from trfree.models import Mode, OutputFormat
from trfree.schemas import (
    AGGREGATE_STATS,
    AGGREGATED_METRICS,
    aggregate_rows_schema,
    checkpoint_rows_schema,
    independence_rows_schema,
    oracle_report_schema,
    run_config_schema,
    subgraph_frequency_schema,
    trace_rows_schema,
    trace_summary_schema,
    trajectory_model_schema,
)
from trfree.services import independence, oracle, process_engine
from trfree.services.combinatorics import q, scaling, unrank
from trfree.services.observables import (
    MartingaleRecorder,
    choose_tracked_pairs,
    choose_tracked_sets,
    record_checkpoint,
    subgraph_frequency_test,
    trace_increments,
)
from trfree.utils.decorators import timed
from trfree.utils.helpers import (
    checkpoint_schedule,
    default_checkpoint_every,
    format_real,
    run_streams,
)

logger = logging.getLogger(__name__)

TOOL_NAME = "trfree"
ORACLE_CE_PER_CHECKPOINT = 5
MANIFEST_FILE = "manifest.json"


@dataclass
class RunOutcome:
    """Everything one run contributes to the ensemble outputs."""

    run_id: int
    i_reached: int
    M: Optional[int]
    checkpoints: list = field(default_factory=list)
    trace: object = None
    independence: list = field(default_factory=list)
    oracle: Optional[dict] = None


@dataclass
class EnsembleResult:
    config: object
    model: object
    outcomes: list
    files: list
    summary: dict
    exit_code: int = 0


# --- Configuration ---
def load_run_config(data):
    """Validate a mapping of RunConfig fields.

    Raises:
        ConfigError: carrying the marshmallow messages.
    """
    try:
        return run_config_schema.load(data)
    except ValidationError as err:
        raise ConfigError(f"invalid run configuration: {err.messages}", err.messages) from err


def prepare_output(path):
    """Create ``path`` if needed and make sure files can be written into it."""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as err:
        raise ConfigError(f"cannot create output directory {path!r}: {err}") from err
    if not os.path.isdir(path) or not os.access(path, os.W_OK | os.X_OK):
        raise ConfigError(f"output directory {path!r} is not writable")


def _check_mode_limits(config, settings):
    if config.mode == Mode.oracle_test and config.n > settings.ORACLE_MAX_N:
        raise ConfigError(
            f"oracle-test needs n <= ORACLE_MAX_N={settings.ORACLE_MAX_N}, got n={config.n}",
            {"n": [f"must be at most {settings.ORACLE_MAX_N} in oracle-test mode"]},
        )


# --- One run ---
def _observe(state, config, model, sampler, run_id, check_every_step, on_step=None):
    """Advance ``state`` to min(i_max, M), recording a checkpoint at every scheduled step."""
    every = config.checkpoint_every or default_checkpoint_every(model)
    records = []
    for target in checkpoint_schedule(every, model.i_max):
        process_engine.run(
            state, until_i=target, on_step=on_step, check_every_step=check_every_step
        )
        if state.i < target:
            break
        process_engine.check_partition(state)
        records.append(record_checkpoint(state, model, config.ce_sample_size, sampler, run_id))
    if state.open_count == 0 and (not records or records[-1].i != state.i):
        records.append(record_checkpoint(state, model, config.ce_sample_size, sampler, run_id))
    return records


def _finish(state, config, model, sampler, run_id, records):
    """Drive to termination when asked and record the final step."""
    if not config.drive_to_termination or state.open_count == 0:
        return
    process_engine.run(state)
    process_engine.check_partition(state)
    records.append(record_checkpoint(state, model, config.ce_sample_size, sampler, run_id))


def _independence_row(state, model, sampler, run_id, stage, node_budget):
    graph = independence.graph_of(state)
    greedy = len(independence.greedy_independent(graph, sampler))
    result = independence.exact_mis(graph, node_budget, seed=sampler)
    n, r, k = model.n, model.r, model.k
    K = sorted(int(v) for v in sampler.choice(n, size=min(k, n), replace=False))
    family = independence.heavy_family(state, K, model.tau_threshold)
    return {
        "run_id": run_id,
        "stage": stage,
        "i": state.i,
        "alpha": result.alpha,
        "lower_bound": result.lower_bound,
        "upper_bound": result.upper_bound,
        "exact": result.exact,
        "nodes_expanded": result.nodes_expanded,
        "greedy": greedy,
        "ratio": independence.alpha_estimate(result) / (n * math.log(n)) ** (1 / r),
        "k": k,
        "open_inside_k": independence.open_rsets_inside(state, K),
        "q_pred_inside_k": q(model.t(state.i), r) * math.comb(len(K), r),
        "heavy_sets": len(family),
        "heavy_bound": 2 * n ** (2 * model.constants.epsilon),
        "bad_vertices": len(independence.bad_vertices(state, K, family)),
    }


def _oracle_run(config, process_seed, sampler, run_id):
    """Replay one run against the brute-force oracle at every step."""
    n, r = config.n, config.r
    probe = process_engine.init(n, r, process_seed)
    M = process_engine.run(probe).i
    size = min(config.oracle_checkpoints, M + 1)
    ce_steps = set()
    if size:
        ce_steps = {int(s) for s in sampler.choice(M + 1, size=size, replace=False)}

    report = {"steps": 0, "ce": 0, "mismatches": 0, "first": None}

    def mismatch(step, what):
        report["mismatches"] += 1
        if report["first"] is None:
            report["first"] = step
            logger.error("oracle mismatch in run %s at step %s: %s", run_id, step, what)

    def compare(state, outcome=None):
        edges = state.edge_sets()
        report["steps"] += 1
        opened = {unrank(idx, n, r) for idx in state.open_list}
        if opened != oracle.oracle_open_set(edges, n, r):
            mismatch(state.i, "open sets differ")
        closed = set(state.ranks_with(process_engine.CLOSED))
        if closed != {e.rank for e in oracle.oracle_closed_set(edges, n, r)}:
            mismatch(state.i, "closed sets differ")
        if state.i in ce_steps and state.open_list:
            size = min(ORACLE_CE_PER_CHECKPOINT, state.open_count)
            for pos in sampler.choice(state.open_count, size=size, replace=False):
                e = unrank(state.open_list[int(pos)], n, r)
                report["ce"] += 1
                if process_engine.compute_Ce(state, e) != oracle.oracle_Ce(edges, e, n, r):
                    mismatch(state.i, f"C_e differs for {e!r}")

    state = process_engine.init(n, r, process_seed)
    compare(state)
    process_engine.run(state, on_step=compare, check_every_step=True)
    if state.i != M:
        mismatch(state.i, f"replay ended at {state.i}, first pass at {M}")
    edges = state.edge_sets()
    maximal = oracle.oracle_is_Tr_free(edges, n, r) and not oracle.oracle_open_set(edges, n, r)
    if not maximal:
        mismatch(state.i, "final graph is not a maximal T^(r)-free graph")
    return state, {
        "run_id": run_id,
        "M": M,
        "steps_checked": report["steps"],
        "ce_checks": report["ce"],
        "mismatches": report["mismatches"],
        "first_mismatch_step": report["first"],
        "maximal": maximal,
    }


def execute_run(config, model, run_id, check_every_step=False, node_budget=None):
    """Execute run ``run_id`` of the ensemble in the mode of ``config``.

    Module-level so worker processes can unpickle it.
    """
    process_seed, sampler = run_streams(config.master_seed, run_id)
    mode = config.mode
    outcome = RunOutcome(run_id=run_id, i_reached=0, M=None)

    if mode == Mode.oracle_test:
        state, outcome.oracle = _oracle_run(config, process_seed, sampler, run_id)
    else:
        state = process_engine.init(config.n, config.r, process_seed)
        if mode == Mode.martingale:
            tracked_As = choose_tracked_sets(config.n, config.r, config.tracked_A_count, sampler)
            tracked_pairs = choose_tracked_pairs(
                config.n, model.ell, config.tracked_pair_count, sampler
            )
            recorder = MartingaleRecorder(model, tracked_As, tracked_pairs, run_id=run_id)
            recorder.start(state)
            records = _observe(
                state, config, model, sampler, run_id, check_every_step, on_step=recorder
            )
            outcome.trace = recorder.finish(min(model.i_max, state.i))
        else:
            records = _observe(state, config, model, sampler, run_id, check_every_step)
        if mode == Mode.independence:
            budget = node_budget or independence.DEFAULT_NODE_BUDGET
            outcome.independence.append(
                _independence_row(state, model, sampler, run_id, "i_max", budget)
            )
            if config.drive_to_termination and state.open_count:
                _finish(state, config, model, sampler, run_id, records)
                outcome.independence.append(
                    _independence_row(state, model, sampler, run_id, "terminal", budget)
                )
        else:
            _finish(state, config, model, sampler, run_id, records)
        outcome.checkpoints = records

    outcome.i_reached = state.i
    outcome.M = state.i if state.open_count == 0 else None
    logger.debug("run %s reached i=%s (M=%s)", run_id, outcome.i_reached, outcome.M)
    return outcome


def _execute_all(config, model, workers, check_every_step, node_budget):
    run_ids = range(config.runs)
    if workers <= 1 or config.runs == 1:
        return [
            execute_run(config, model, run_id, check_every_step, node_budget) for run_id in run_ids
        ]
    count = len(run_ids)
    with ProcessPoolExecutor(max_workers=min(workers, count)) as pool:
        outcomes = list(
            pool.map(
                execute_run,
                [config] * count,
                [model] * count,
                run_ids,
                [check_every_step] * count,
                [node_budget] * count,
            )
        )
    return sorted(outcomes, key=lambda outcome: outcome.run_id)


# --- Aggregation ---
def aggregate_checkpoints(records):
    """Mean/std/min/max of every measured column, grouped by step i.

    Runs that terminated before a checkpoint simply do not contribute to it; std is
    the population standard deviation. Rows come out in increasing i.
    """
    groups = {}
    for record in records:
        groups.setdefault(record.i, []).append(record)
    rows = []
    for i in sorted(groups):
        group = groups[i]
        first = group[0]
        row = {
            "i": i,
            "t": first.t,
            "runs": len(group),
            "q_pred": first.q_pred,
            "c_pred": first.c_pred,
            "deg_pred": first.deg_pred,
            "q_lower": first.q_pred - first.open_band,
            "q_upper": first.q_pred + first.open_band,
            "c_lower": first.c_pred - first.ce_band,
            "c_upper": first.c_pred + first.ce_band,
        }
        for metric in AGGREGATED_METRICS:
            attribute = "max_codeg_rm1" if metric == "max_codeg" else metric
            values = [getattr(rec, attribute) for rec in group]
            values = np.array([v for v in values if v is not None], dtype=float)
            for stat in AGGREGATE_STATS:
                key = f"{metric}_{stat}"
                if values.size == 0:
                    row[key] = None
                    continue
                row[key] = float(getattr(np, stat)(values))
        rows.append(row)
    return rows


# --- Martingale rows ---
def _pair_key(pair):
    return "-".join(map(str, pair.A)) + "|" + "-".join(map(str, pair.B))


def trace_rows(trace):
    """Long-format rows of one run's martingale trace."""
    rows = []
    for set_trace in trace.sets:
        key = "-".join(map(str, set_trace.A))
        for pos, i in enumerate(trace.steps):
            rows.append(
                {
                    "run_id": trace.run_id,
                    "kind": "set",
                    "key": key,
                    "i": i,
                    "t": trace.times[pos],
                    "Q": set_trace.Q[pos],
                    "degree": set_trace.degree[pos],
                    "Y_plus": set_trace.Y_plus[pos],
                    "Y_minus": set_trace.Y_minus[pos],
                    "Z": set_trace.Z[pos],
                }
            )
    for pair in trace.pairs:
        key = _pair_key(pair)
        for pos, i in enumerate(trace.steps):
            rows.append(
                {
                    "run_id": trace.run_id,
                    "kind": "pair",
                    "key": key,
                    "i": i,
                    "t": trace.times[pos],
                    "Q_AB": pair.Q_AB[pos],
                    "X_plus": pair.X_plus[pos],
                    "X_minus": pair.X_minus[pos],
                }
            )
    return rows


def trace_summary_rows(trace):
    """First violation step and observed one-step bounds of every sequence of a trace."""
    rows = []
    for set_trace in trace.sets:
        key = "-".join(map(str, set_trace.A))
        for name in ("Y_plus", "Y_minus", "Z"):
            decrease, increase = trace_increments(getattr(set_trace, name))
            rows.append(
                {
                    "run_id": trace.run_id,
                    "kind": "set",
                    "key": key,
                    "sequence": name,
                    "first_violation": set_trace.first_violation.get(name),
                    "max_decrease": decrease,
                    "max_increase": increase,
                }
            )
    for pair in trace.pairs:
        key = _pair_key(pair)
        for name in ("X_plus", "X_minus"):
            decrease, increase = trace_increments(getattr(pair, name))
            rows.append(
                {
                    "run_id": trace.run_id,
                    "kind": "pair",
                    "key": key,
                    "S": trace.S,
                    "tau": pair.tau,
                    "tau_reached": pair.tau_reached,
                    "sequence": name,
                    "first_violation": pair.first_violation.get(name),
                    "max_decrease": decrease,
                    "max_increase": increase,
                }
            )
    return rows


# --- Writers ---
def write_table(directory, name, schema, records, fmt):
    """Dump ``records`` through ``schema`` into ``name``.csv or ``name``.json.

    Columns follow the schema's declaration order; absent values become empty cells.

    Returns:
        str: the file name written.
    """
    rows = schema.dump(records)
    columns = list(schema.fields)
    filename = f"{name}.{fmt.value}"
    target = os.path.join(directory, filename)
    if fmt == OutputFormat.json:
        payload = [{column: row.get(column) for column in columns} for row in rows]
        with open(target, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")
    else:
        with open(target, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_real(row.get(column)) for column in columns])
    logger.info("wrote %s (%s rows)", target, len(rows))
    return filename


def write_manifest(directory, config, model, outcomes, files, summary):
    manifest = {
        "tool": TOOL_NAME,
        "version": __version__,
        "config": run_config_schema.dump(config),
        "model": trajectory_model_schema.dump(model),
        "runs": [
            {"run_id": outcome.run_id, "i_reached": outcome.i_reached, "M": outcome.M}
            for outcome in outcomes
        ],
        "files": files,
        "summary": summary,
    }
    with open(os.path.join(directory, MANIFEST_FILE), "w", encoding="utf-8", newline="\n") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")
    return MANIFEST_FILE


def _subgraph_pattern(config):
    """The first ``pattern_size`` disjoint r-sets; disjoint edges never form a copy of T^(r)."""
    r = config.r
    return [tuple(range(a * r, (a + 1) * r)) for a in range(config.pattern_size)]


def _summarize(config, model, outcomes):
    summary = {}
    terminal = [outcome.M for outcome in outcomes if outcome.M is not None]
    if terminal:
        summary["M_mean"] = float(np.mean(terminal))
        summary["M_std"] = float(np.std(terminal))
        summary["M_min"] = int(min(terminal))
        summary["M_max"] = int(max(terminal))
    records = [record for outcome in outcomes for record in outcome.checkpoints]
    if records:
        limit = 5 * config.r
        over = sorted({rec.run_id for rec in records if rec.max_codeg_rm1 > limit})
        summary["codegree_threshold"] = limit
        summary["runs_over_codegree_threshold"] = len(over)
        if over:
            logger.warning(
                "max codegree exceeded %s in %s of %s runs", limit, len(over), len(outcomes)
            )
    if config.mode == Mode.oracle_test:
        summary["oracle_mismatches"] = sum(outcome.oracle["mismatches"] for outcome in outcomes)
        summary["oracle_runs_failed"] = sum(
            1 for outcome in outcomes if outcome.oracle["mismatches"]
        )
    if config.mode == Mode.independence:
        rows = [row for outcome in outcomes for row in outcome.independence]
        for stage in ("i_max", "terminal"):
            ratios = [row["ratio"] for row in rows if row["stage"] == stage]
            if ratios:
                summary[f"alpha_ratio_mean_{stage}"] = float(np.mean(ratios))
    return summary


@timed("ensemble")
def run_ensemble(config, workers=1, settings=None):
    """Run an ensemble and write its outputs.

    Args:
        config (RunConfig | dict): validated RunConfig or a mapping loaded through the schema.
        workers (int): worker processes; 1 runs serially in this process.
        settings: settings class; defaults to the active one.

    Returns:
        EnsembleResult: exit_code is 2 when an oracle-test run found a mismatch.

    Raises:
        ConfigError: before any run when the config or the output path is unusable.
    """
    from trfree import get_settings

    settings = settings or get_settings()
    if isinstance(config, dict):
        config = load_run_config(config)
    else:
        config = load_run_config(run_config_schema.dump(config))
    _check_mode_limits(config, settings)
    prepare_output(config.output_path)

    model = scaling(config.n, config.r, config.constants, config.i_max_override)
    node_budget = config.mis_node_budget or settings.MIS_NODE_BUDGET
    logger.info(
        "ensemble mode=%s n=%s r=%s runs=%s i_max=%s workers=%s",
        config.mode.value,
        config.n,
        config.r,
        config.runs,
        model.i_max,
        workers,
    )

    directory, fmt = config.output_path, config.format
    files = []
    if config.mode == Mode.subgraph_freq:
        j = config.pattern_step if config.pattern_step is not None else model.i_max
        result = subgraph_frequency_test(
            _subgraph_pattern(config),
            j,
            config.runs,
            config.n,
            config.r,
            config.master_seed,
            i_max=model.i_max,
        )
        outcomes = []
        files.append(
            write_table(directory, "subgraph_frequency", subgraph_frequency_schema, [result], fmt)
        )
        summary = {"empirical_p": result.empirical_p, "predicted_p": result.predicted_p}
    else:
        outcomes = _execute_all(
            config, model, workers, settings.CHECK_PARTITION_EVERY_STEP, node_budget
        )
        records = [record for outcome in outcomes for record in outcome.checkpoints]
        if config.mode != Mode.oracle_test:
            files.append(write_table(directory, "checkpoints", checkpoint_rows_schema, records, fmt))
            files.append(
                write_table(
                    directory, "aggregate", aggregate_rows_schema, aggregate_checkpoints(records), fmt
                )
            )
        if config.mode == Mode.martingale:
            traces = [outcome.trace for outcome in outcomes]
            rows = [row for trace in traces for row in trace_rows(trace)]
            summary_rows = [row for trace in traces for row in trace_summary_rows(trace)]
            files.append(write_table(directory, "martingale_traces", trace_rows_schema, rows, fmt))
            files.append(
                write_table(directory, "martingale_summary", trace_summary_schema, summary_rows, fmt)
            )
        if config.mode == Mode.independence:
            rows = [row for outcome in outcomes for row in outcome.independence]
            files.append(write_table(directory, "independence", independence_rows_schema, rows, fmt))
        if config.mode == Mode.oracle_test:
            rows = [outcome.oracle for outcome in outcomes]
            files.append(write_table(directory, "oracle_report", oracle_report_schema, rows, fmt))
        summary = _summarize(config, model, outcomes)

    files.insert(0, write_manifest(directory, config, model, outcomes, files, summary))
    exit_code = 2 if summary.get("oracle_mismatches") else 0
    if exit_code:
        logger.error("oracle-test failed: %s mismatches", summary["oracle_mismatches"])
    logger.info("ensemble finished; %s files in %s", len(files), directory)
    return EnsembleResult(config, model, outcomes, files, summary, exit_code)

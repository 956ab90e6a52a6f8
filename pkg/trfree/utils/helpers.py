"""Helper utility functions for the T^(r)-free process laboratory.

This module contains seed-stream derivation, output formatting and the
checkpoint schedule.
"""
import math

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence

PROCESS_STREAM = 0
SAMPLER_STREAM = 1


def run_seed_sequence(master_seed, run_id, salt=()):
    """Derive the seed material of one run from the master seed.

    Args:
        master_seed (int): Ensemble-wide seed.
        run_id (int): Index of the run inside the ensemble.
        salt (tuple): Extra spawn-key entries placed before run_id (e.g. n in a probe grid).

    Returns:
        SeedSequence: ``SeedSequence(master_seed, spawn_key=(*salt, run_id))``.
    """
    return SeedSequence(master_seed, spawn_key=tuple(salt) + (run_id,))


def run_streams(master_seed, run_id, salt=()):
    """Split a run's seed into the process stream and the sampler stream.

    The process stream drives only the uniform choice of open r-sets, so anything
    drawn from the sampler stream (C_e samples, tracked sets, greedy orders) never
    changes the edge sequence.

    Returns:
        tuple: (SeedSequence for the process, Generator for sampling).
    """
    children = run_seed_sequence(master_seed, run_id, salt).spawn(2)
    return children[PROCESS_STREAM], make_rng(children[SAMPLER_STREAM])


def make_rng(seed):
    """Build a PCG64 generator from an int, a SeedSequence or an existing generator."""
    if isinstance(seed, Generator):
        return seed
    return Generator(PCG64(seed))


def format_real(value):
    """Render a value for CSV: ints verbatim, reals with 17 significant digits.

    None and NaN become an empty cell.
    """
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return format(float(value), ".17g")
    return str(value)


def checkpoint_schedule(every, end):
    """Steps at which observations are recorded: 0, 1, every multiple of ``every`` and ``end``."""
    steps = {0, end}
    if end >= 1:
        steps.add(1)
    steps.update(range(every, end, every))
    return sorted(steps)


def default_checkpoint_every(model):
    """Quarter time-units: ceil(time_scale / 4) steps; a quarter of i_max when no copy fits."""
    if not math.isfinite(model.time_scale):
        return max(1, model.i_max // 4)
    return max(1, math.ceil(model.time_scale / 4))

"""Measurement of the tracked quantities of the T^(r)-free process.

Checkpoint records compare |O(i)|, sampled |C_e(i)|, the maximum (r-1)-degree and
the maximum (r-1)-codegree against their predicted trajectories. Martingale traces
follow the shifted sequences Y+/Y-/Z for tracked (r-1)-sets and X+/X- for tracked
pairs of disjoint ell-sets at every step, up to min(i_max, M).
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple, Optional

from trfree.exceptions import InvalidArgumentError
from trfree.models import MartingaleTrace, ObservationRecord, PairTrace, SetTrace
from trfree.services import process_engine
from trfree.services.combinatorics import (
    binomial_table,
    c,
    f,
    f1,
    find_copy,
    make_rset,
    q,
    rank,
    rank_inserted,
    unrank,
)
from trfree.utils.helpers import make_rng, run_streams

logger = logging.getLogger(__name__)


# --- Degrees and codegrees ---
def max_degree(state):
    """Delta_{r-1}(G(i))."""
    return max((len(nbrs) for nbrs in state.neighborhoods.values()), default=0)


def codegree_counts(state):
    """Codegree of every pair of (r-1)-sets with a common neighbour, by bucketing edges.

    For each vertex x the (r-1)-sets A with x in N_i(A) are the sets e - {x} over
    edges e containing x; two of them share x as a common neighbour.
    """
    buckets = {}
    for idx in state.edges:
        vertices = unrank(idx, state.n, state.r).vertices
        for x in vertices:
            buckets.setdefault(x, []).append(tuple(v for v in vertices if v != x))
    counts = Counter()
    for sets in buckets.values():
        counts.update(combinations(sorted(sets), 2))
    return counts


def codegree(state, A, B):
    """|N_i(A) & N_i(B) - (A | B)| by direct intersection."""
    A, B = tuple(sorted(A)), tuple(sorted(B))
    common = state.neighborhood(A) & state.neighborhood(B)
    return len(common - set(A) - set(B))


def max_codegree(state):
    return max(codegree_counts(state).values(), default=0)


# --- Checkpoints ---
def _sample_open(state, sample_size, rng):
    size = min(sample_size, state.open_count)
    if size == 0:
        return []
    positions = rng.choice(state.open_count, size=size, replace=False)
    return [state.open_list[int(pos)] for pos in sorted(positions)]


def record_checkpoint(state, model, sample_size, rng=None, run_id=0):
    """Measure the process at its current step.

    Args:
        state (ProcessState): the run being observed; left unchanged.
        model (TrajectoryModel): predictions for (n, r).
        sample_size (int): number of open r-sets whose |C_e(i)| is measured.
        rng: sampler-stream generator (never the process stream).
        run_id (int): copied into the record.

    Returns:
        ObservationRecord
    """
    if sample_size < 1:
        raise InvalidArgumentError("sample_size must be at least 1")
    rng = make_rng(rng if rng is not None else 0)
    r = model.r
    t = model.t(state.i)
    root_D = model.D_distinct ** (1 / r)
    samples = [
        len(process_engine.closure_ranks(state, idx))
        for idx in _sample_open(state, sample_size, rng)
    ]
    return ObservationRecord(
        run_id=run_id,
        i=state.i,
        t=t,
        open_count=state.open_count,
        q_pred=q(t, r) * model.N,
        open_band=model.open_band,
        ce_samples=samples,
        c_pred=c(t, r) * root_D,
        ce_band=model.ce_band,
        max_deg_rm1=max_degree(state),
        deg_pred=t * model.n / root_D if root_D else 0.0,
        max_codeg_rm1=max_codegree(state),
        edges_count=len(state.edges),
    )


# --- Open supersets and pairs ---
def compute_QA(state, A):
    """Q_A(i): open r-sets containing the (r-1)-set A."""
    A = tuple(sorted(A))
    table = binomial_table(state.n, state.r)
    status = state.status
    return sum(
        1
        for x in range(state.n)
        if x not in A and status[rank_inserted(A, x, table)] == process_engine.OPEN
    )


def crossing_ranks(A, B, n, r):
    """Ranks of the r-subsets of A | B meeting both A and B; there are S of them."""
    A_set, B_set = set(A), set(B)
    union = sorted(A_set | B_set)
    return [
        rank(e)
        for e in combinations(union, r)
        if not A_set.isdisjoint(e) and not B_set.isdisjoint(e)
    ]


def pair_size(ell, r):
    """S = C(2 ell, r) - 2 C(ell, r)."""
    return math.comb(2 * ell, r) - 2 * math.comb(ell, r)


def _touches_both(nbrs, A_set, B_set, threshold):
    hits_A = len(nbrs & A_set)
    hits_B = len(nbrs & B_set)
    return hits_A > 0 and hits_B > 0 and hits_A + hits_B >= threshold


def detect_tau(state, A, B, k, epsilon):
    """True iff some (r-1)-set X has N_i(X) meeting A and B with |N_i(X) & (A|B)| >= k/n^(2 eps)."""
    A_set, B_set = set(A), set(B)
    if A_set & B_set:
        raise InvalidArgumentError("A and B must be disjoint")
    threshold = k / state.n ** (2 * epsilon)
    return any(
        _touches_both(nbrs, A_set, B_set, threshold) for nbrs in state.neighborhoods.values()
    )


class TauInfo(NamedTuple):
    """Stopping step of a pair (None while not reached) and the ranks closed at the current step."""

    step: Optional[int]
    newly_closed: tuple = ()


def compute_QAB(state, A, B, tau_info=None):
    """Q_{A,B}(i): crossing r-sets of A | B that are open, plus those closed exactly at step tau."""
    status = state.status
    crossing = crossing_ranks(A, B, state.n, state.r)
    count = sum(1 for idx in crossing if status[idx] == process_engine.OPEN)
    if tau_info is not None and tau_info.step == state.i:
        members = set(crossing)
        count += sum(1 for idx in tau_info.newly_closed if idx in members)
    return count


# --- Martingale traces ---
VIOLATIONS_SET = {
    "Y_plus": lambda value: value < 0,
    "Y_minus": lambda value: value > 0,
    "Z": lambda value: value > 0,
}
VIOLATIONS_PAIR = {
    "X_plus": lambda value: value <= 0,
    "X_minus": lambda value: value >= 0,
}


@dataclass
class _PairState:
    trace: PairTrace
    A_set: set
    B_set: set
    members: set
    open_members: int


class MartingaleRecorder:
    """Per-step hook that extends the Y/Z/X sequences of the tracked sets and pairs."""

    def __init__(self, model, tracked_As, tracked_pairs, run_id=0):
        self.model = model
        eps = model.constants.epsilon
        self.n_pow_1_eps = model.n ** (1 - eps)
        self.n_pow_1r_eps = model.n ** (1 / model.r - eps)
        self.S = pair_size(model.ell, model.r)
        self.S_n_eps = self.S * model.n ** (-eps)
        self.threshold = model.tau_threshold
        root_D = model.D_distinct ** (1 / model.r)
        self.deg_slope = model.n / root_D if root_D else 0.0
        self.trace = MartingaleTrace(run_id=run_id, S=self.S)
        self.sets = [SetTrace(A=tuple(sorted(A))) for A in tracked_As]
        self.pairs = []
        for A, B in tracked_pairs:
            members = set(crossing_ranks(A, B, model.n, model.r))
            self.pairs.append(
                _PairState(
                    trace=PairTrace(A=tuple(sorted(A)), B=tuple(sorted(B))),
                    A_set=set(A),
                    B_set=set(B),
                    members=members,
                    open_members=len(members),
                )
            )
        self.trace.sets = self.sets
        self.trace.pairs = [pair.trace for pair in self.pairs]

    def start(self, state):
        """Record step 0 (or whatever step the state is at before the run)."""
        for pair in self.pairs:
            pair.open_members = sum(
                1 for idx in pair.members if state.status[idx] == process_engine.OPEN
            )
        self._record(state, ())

    def __call__(self, state, outcome):
        changed = [outcome.chosen.rank] + [rset.rank for rset in outcome.newly_closed]
        closed = tuple(rset.rank for rset in outcome.newly_closed)
        vertices = outcome.chosen.vertices
        for pair in self.pairs:
            pair.open_members -= sum(1 for idx in changed if idx in pair.members)
            if pair.trace.tau_reached:
                continue
            for x in vertices:
                X = tuple(v for v in vertices if v != x)
                if _touches_both(state.neighborhoods[X], pair.A_set, pair.B_set, self.threshold):
                    pair.trace.tau_reached = True
                    pair.trace.tau = state.i
                    break
        self._record(state, closed)

    def _record(self, state, closed):
        model = self.model
        W = model.constants.W
        i = state.i
        t = model.t(i)
        qt = q(t, model.r)
        ft = f(t, W, model.r)
        self.trace.steps.append(i)
        self.trace.times.append(t)

        for set_trace in self.sets:
            Q = compute_QA(state, set_trace.A)
            d = state.degree(set_trace.A)
            set_trace.Q.append(Q)
            set_trace.degree.append(d)
            base = qt * model.n - Q
            self._push(set_trace, "Y_plus", base + ft * self.n_pow_1_eps, i, VIOLATIONS_SET)
            self._push(set_trace, "Y_minus", base - ft * self.n_pow_1_eps, i, VIOLATIONS_SET)
            Z = d - t * self.deg_slope - f1(t, W, model.r) * self.n_pow_1r_eps
            self._push(set_trace, "Z", Z, i, VIOLATIONS_SET)

        for pair in self.pairs:
            trace = pair.trace
            Q_AB = pair.open_members
            if trace.tau == i:
                Q_AB += sum(1 for idx in closed if idx in pair.members)
            trace.Q_AB.append(Q_AB)
            base = qt * self.S - Q_AB
            watch = VIOLATIONS_PAIR if trace.tau is None or i <= trace.tau else {}
            self._push(trace, "X_plus", base + ft * self.S_n_eps, i, watch)
            self._push(trace, "X_minus", base - ft * self.S_n_eps, i, watch)

    @staticmethod
    def _push(trace, name, value, i, watch):
        getattr(trace, name).append(value)
        check = watch.get(name)
        if check is not None and name not in trace.first_violation and check(value):
            trace.first_violation[name] = i

    def finish(self, end_step):
        """Close the traces: pairs that never stopped get tau = end_step (<= i_max)."""
        for pair in self.pairs:
            if pair.trace.tau is None:
                pair.trace.tau = end_step
        return self.trace


def choose_tracked_sets(n, r, count, rng):
    """``count`` distinct uniformly random (r-1)-sets of [n]."""
    total = math.comb(n, r - 1)
    count = min(count, total)
    picks = rng.choice(total, size=count, replace=False) if count else []
    return [unrank(int(idx), n, r - 1).vertices for idx in picks]


def choose_tracked_pairs(n, ell, count, rng):
    """``count`` random pairs of disjoint ell-sets; none when 2 ell > n."""
    if 2 * ell > n:
        logger.warning("No tracked pairs: 2*ell=%s exceeds n=%s.", 2 * ell, n)
        return []
    pairs = []
    for _ in range(count):
        perm = [int(v) for v in rng.permutation(n)]
        pairs.append((tuple(sorted(perm[:ell])), tuple(sorted(perm[ell : 2 * ell]))))
    return pairs


def build_martingale_traces(state, tracked_As, tracked_pairs, model, run_id=0, on_step=None):
    """Drive ``state`` to min(i_max, M) while recording every trace at every step.

    Args:
        on_step (callable, optional): extra per-step hook run after the recorder.

    Returns:
        MartingaleTrace
    """
    recorder = MartingaleRecorder(model, tracked_As, tracked_pairs, run_id=run_id)
    recorder.start(state)

    def hook(current, outcome):
        recorder(current, outcome)
        if on_step is not None:
            on_step(current, outcome)

    result = process_engine.run(state, until_i=model.i_max, on_step=hook)
    return recorder.finish(min(model.i_max, result.i) if result.terminated else model.i_max)


def trace_increments(values):
    """Largest one-step decrease and increase of a sequence (observed b and B)."""
    steps = [b - a for a, b in zip(values, values[1:])]
    if not steps:
        return 0.0, 0.0
    return max(0.0, -min(steps)), max(0.0, max(steps))


# --- Subgraph frequencies ---
@dataclass
class SubgraphFrequency:
    L: int
    j: int
    runs: int
    hits: int
    empirical_p: float
    predicted_p: float
    stderr: float


def subgraph_frequency_test(pattern, j, runs, n, r, seed, i_max=None):
    """Fraction of seeded runs with every pattern edge in E(j), beside (j/N)^L.

    Args:
        pattern: T^(r)-free list of r-sets.
        j (int): step at which E(j) is inspected.
        runs (int): independent runs; run ``k`` uses seed material (seed, k).
        seed (int): master seed.
        i_max (int, optional): warn when j exceeds it.

    Returns:
        SubgraphFrequency
    """
    rsets = [make_rset(e.vertices if hasattr(e, "vertices") else e, n) for e in pattern]
    if len({e.rank for e in rsets}) != len(rsets):
        raise InvalidArgumentError("pattern repeats an r-set")
    if find_copy(rsets, n, r) is not None:
        raise InvalidArgumentError("pattern contains a copy of T^(r)")
    if j < 0 or runs < 1:
        raise InvalidArgumentError("need j >= 0 and runs >= 1")
    if i_max is not None and j > i_max:
        logger.warning("Pattern step j=%s is beyond i_max=%s.", j, i_max)

    N = math.comb(n, r)
    hits = 0
    for run_id in range(runs):
        process_seed, _ = run_streams(seed, run_id)
        state = process_engine.init(n, r, process_seed)
        process_engine.run(state, until_i=j)
        if all(state.status[e.rank] == process_engine.EDGE for e in rsets):
            hits += 1
    empirical = hits / runs
    return SubgraphFrequency(
        L=len(rsets),
        j=j,
        runs=runs,
        hits=hits,
        empirical_p=empirical,
        predicted_p=(j / N) ** len(rsets),
        stderr=math.sqrt(empirical * (1 - empirical) / runs),
    )

"""
Tests for checkpoints, open supersets, stopping times and martingale traces
"""
import math

import pytest

from tests.helpers import force_edge, state_with_edges
from trfree.exceptions import InvalidArgumentError
from trfree.models import ConstantPack
from trfree.services import oracle, process_engine
from trfree.services.combinatorics import f, scaling, unrank
from trfree.services.observables import (
    MartingaleRecorder,
    TauInfo,
    build_martingale_traces,
    choose_tracked_pairs,
    choose_tracked_sets,
    codegree,
    codegree_counts,
    compute_QA,
    compute_QAB,
    crossing_ranks,
    detect_tau,
    max_codegree,
    max_degree,
    pair_size,
    record_checkpoint,
    subgraph_frequency_test,
    trace_increments,
)
from trfree.utils.helpers import make_rng


def test_checkpoint_at_zero():
    """At i=0 the record matches q(0)=1 and c(0)=0."""
    model = scaling(12, 3)
    state = process_engine.init(12, 3, 0)
    record = record_checkpoint(state, model, 10, make_rng(1))
    assert record.open_count == model.N == record.q_pred
    assert record.ce_samples == [0] * 10
    assert record.c_pred == 0.0
    assert record.max_deg_rm1 == 0
    assert record.max_codeg_rm1 == 0


def test_checkpoint_reads_engine_state():
    """open_count is the engine's |O(i)| and samples never exceed the open count."""
    model = scaling(10, 3)
    state = process_engine.init(10, 3, 4)
    process_engine.run(state, until_i=15)
    record = record_checkpoint(state, model, 500, make_rng(2))
    assert record.open_count == state.open_count
    assert len(record.ce_samples) == state.open_count
    assert record.max_deg_rm1 == max_degree(state)


def test_checkpoint_rejects_empty_sample():
    """sample_size must be positive."""
    state = process_engine.init(6, 3, 0)
    with pytest.raises(InvalidArgumentError):
        record_checkpoint(state, scaling(6, 3), 0)


def test_checkpoint_does_not_touch_process_stream():
    """Sampling C_e leaves the edge sequence unchanged."""
    model = scaling(12, 3)
    observed = process_engine.init(12, 3, 8)
    plain = process_engine.init(12, 3, 8)
    for target in (5, 10, 20):
        process_engine.run(observed, until_i=target)
        record_checkpoint(observed, model, 8, make_rng(target))
    process_engine.run(plain, until_i=20)
    assert observed.edges == plain.edges


def test_codegree_bucketing_matches_direct():
    """Bucketed codegrees equal direct neighbourhood intersections."""
    state = process_engine.init(11, 3, 6)
    process_engine.run(state, until_i=30)
    counts = codegree_counts(state)
    assert counts
    for (A, B), value in counts.items():
        assert codegree(state, A, B) == value
    assert max_codegree(state) == max(counts.values())


def test_QA_initial_and_exhausted():
    """Q_A(0) = n - r + 1 and drops to 0 once every superset is gone."""
    state = process_engine.init(6, 3, 0)
    assert compute_QA(state, (0, 1)) == 4
    state = state_with_edges(5, 3, [(0, 1, 2), (0, 1, 3), (0, 1, 4)])
    assert compute_QA(state, (0, 1)) == 0


def test_QA_matches_oracle():
    """Q_A equals the count of oracle-open supersets."""
    state = process_engine.init(9, 3, 13)
    process_engine.run(state, until_i=14)
    opened = oracle.oracle_open_set(state.edge_sets(), 9, 3)
    for A in [(0, 1), (2, 5), (3, 8)]:
        assert compute_QA(state, A) == sum(1 for e in opened if set(A) <= set(e.vertices))


def test_QA_conservation_every_step():
    """Q_A(i) plus the edges and closed r-sets containing A stays n - r + 1."""
    n, r = 10, 3
    tracked = choose_tracked_sets(n, r, 5, make_rng(4))

    def check(state, outcome):
        edges = [set(e.vertices) for e in state.edge_sets()]
        closed = [
            set(unrank(idx, n, r).vertices) for idx in state.ranks_with(process_engine.CLOSED)
        ]
        for A in tracked:
            inside_edges = sum(1 for e in edges if set(A) <= e)
            inside_closed = sum(1 for e in closed if set(A) <= e)
            assert compute_QA(state, A) + inside_edges + inside_closed == n - r + 1

    state = process_engine.init(n, r, 21)
    process_engine.run(state, on_step=check)
    assert state.open_count == 0


def test_pair_size_example():
    """ell=5, r=3: S = 120 - 20 = 100."""
    assert pair_size(5, 3) == 100
    A, B = tuple(range(5)), tuple(range(5, 10))
    assert len(crossing_ranks(A, B, 10, 3)) == 100
    state = process_engine.init(10, 3, 0)
    assert compute_QAB(state, A, B) == 100


def test_detect_tau_initial_and_handcrafted():
    """Nothing is reached at i=0; a neighbourhood meeting both sets reaches tau."""
    A, B = (0, 1), (2, 3)
    state = process_engine.init(8, 3, 0)
    assert not detect_tau(state, A, B, k=4, epsilon=0.2)

    state = state_with_edges(8, 3, [(0, 6, 7), (2, 6, 7)])
    assert state.neighborhood((6, 7)) == {0, 2}
    assert detect_tau(state, A, B, k=2, epsilon=0.0)
    assert not detect_tau(state, A, B, k=3, epsilon=0.0)


def test_detect_tau_threshold_monotone():
    """Reached at a threshold implies reached at every lower threshold."""
    state = state_with_edges(8, 3, [(0, 6, 7), (2, 6, 7), (1, 6, 7)])
    A, B = (0, 1), (2, 3)
    reached = [detect_tau(state, A, B, k=k, epsilon=0.0) for k in range(1, 6)]
    assert reached == sorted(reached, reverse=True)
    assert reached[2] and not reached[3]


def test_detect_tau_needs_disjoint_sets():
    """Overlapping sets are invalid."""
    state = process_engine.init(6, 3, 0)
    with pytest.raises(InvalidArgumentError):
        detect_tau(state, (0, 1), (1, 2), k=2, epsilon=0.2)


def test_QAB_counts_closed_at_tau():
    """At the stopping step the crossing sets closed by that step still count."""
    A, B = (0, 1), (2, 3)
    state = state_with_edges(5, 2, [(0, 4)])
    assert compute_QAB(state, A, B) == 4
    outcome = force_edge(state, (2, 4))
    closed = tuple(e.rank for e in outcome.newly_closed)
    assert {e.vertices for e in outcome.newly_closed} == {(0, 2)}
    assert compute_QAB(state, A, B) == 3
    assert compute_QAB(state, A, B, TauInfo(step=state.i, newly_closed=closed)) == 4
    assert compute_QAB(state, A, B, TauInfo(step=state.i - 1, newly_closed=closed)) == 3


def test_QAB_matches_oracle_definition():
    """Before tau Q_AB is the number of open crossing r-sets."""
    state = process_engine.init(10, 3, 21)
    process_engine.run(state, until_i=10)
    A, B = (0, 1, 2, 3), (4, 5, 6, 7)
    opened = oracle.oracle_open_set(state.edge_sets(), 10, 3)
    expected = sum(
        1
        for e in opened
        if set(e.vertices) <= set(A + B) and set(e.vertices) & set(A) and set(e.vertices) & set(B)
    )
    assert compute_QAB(state, A, B) == expected


def test_trace_initial_values():
    """Y+(0) = r-1+n^(1-eps), Z(0) = -n^(1/r-eps) and X+(0) = S n^(-eps)."""
    n, r = 10, 3
    model = scaling(n, r)
    eps = model.constants.epsilon
    state = process_engine.init(n, r, 3)
    pairs = choose_tracked_pairs(n, model.ell, 2, make_rng(1))
    trace = build_martingale_traces(state, [(0, 1), (4, 9)], pairs, model)
    for set_trace in trace.sets:
        assert set_trace.Y_plus[0] == pytest.approx(r - 1 + n ** (1 - eps), rel=1e-12)
        assert set_trace.Y_minus[0] == pytest.approx(r - 1 - n ** (1 - eps), rel=1e-12)
        assert set_trace.Z[0] == pytest.approx(-(n ** (1 / r - eps)), rel=1e-12)
    for pair in trace.pairs:
        assert pair.Q_AB[0] == trace.S
        assert pair.X_plus[0] == pytest.approx(trace.S * n**-eps, rel=1e-12)


def test_trace_identities_every_step():
    """Y+ - Y- = 2 f(t) n^(1-eps) and X+ - X- = 2 f(t) S n^(-eps) at every step."""
    n, r = 16, 3
    model = scaling(n, r)
    eps, W = model.constants.epsilon, model.constants.W
    rng = make_rng(5)
    state = process_engine.init(n, r, 17)
    tracked = choose_tracked_sets(n, r, 6, rng)
    pairs = choose_tracked_pairs(n, model.ell, 3, rng)
    trace = build_martingale_traces(state, tracked, pairs, model)
    assert trace.steps == list(range(len(trace.steps)))
    assert trace.steps[-1] == min(model.i_max, state.i)
    for pos, t in enumerate(trace.times):
        band = 2 * f(t, W, r)
        for set_trace in trace.sets:
            gap = set_trace.Y_plus[pos] - set_trace.Y_minus[pos]
            assert gap == pytest.approx(band * n ** (1 - eps), rel=1e-12)
        for pair in trace.pairs:
            gap = pair.X_plus[pos] - pair.X_minus[pos]
            assert gap == pytest.approx(band * trace.S * n**-eps, rel=1e-12)
    for pair in trace.pairs:
        assert pair.tau <= model.i_max


def test_trace_Q_matches_direct_computation():
    """Incremental Q_AB and tau agree with compute_QAB and detect_tau replayed step by step."""
    n, r = 14, 3
    model = scaling(n, r)
    rng = make_rng(9)
    pairs = choose_tracked_pairs(n, model.ell, 2, rng)
    trace = build_martingale_traces(process_engine.init(n, r, 31), [(0, 1)], pairs, model)

    replay = process_engine.init(n, r, 31)
    taus = {pair: None for pair in pairs}
    for pos, i in enumerate(trace.steps):
        if i:
            outcome = process_engine.step(replay)
        assert compute_QA(replay, (0, 1)) == trace.sets[0].Q[pos]
        for index, (A, B) in enumerate(pairs):
            if taus[(A, B)] is None and detect_tau(
                replay, A, B, model.k, model.constants.epsilon
            ):
                taus[(A, B)] = i
            closed = tuple(e.rank for e in outcome.newly_closed) if i else ()
            info = TauInfo(step=taus[(A, B)], newly_closed=closed)
            assert compute_QAB(replay, A, B, info) == trace.pairs[index].Q_AB[pos]
    for index, pair in enumerate(pairs):
        expected = taus[pair] if taus[pair] is not None else trace.steps[-1]
        assert trace.pairs[index].tau == expected


def test_QAB_never_increases_before_tau():
    """Q_AB starts at S and does not grow on any step before the pair's stopping time."""
    n, r = 16, 3
    model = scaling(n, r)
    pairs = choose_tracked_pairs(n, model.ell, 4, make_rng(6))
    trace = build_martingale_traces(process_engine.init(n, r, 8), [], pairs, model)
    for pair in trace.pairs:
        assert pair.Q_AB[0] == trace.S
        before = [pos for pos, i in enumerate(trace.steps) if i < pair.tau]
        for pos in before[1:]:
            assert pair.Q_AB[pos] <= pair.Q_AB[pos - 1]


def test_first_violation_is_recorded_once():
    """With a tiny error band Z_A turns positive at the first edge through A and stays recorded there."""
    model = scaling(8, 3, ConstantPack(W=0.01, epsilon=0.9))
    state = process_engine.init(8, 3, 0)
    recorder = MartingaleRecorder(model, [(0, 1)], [])
    recorder.start(state)
    for v in range(2, 6):
        recorder(state, force_edge(state, (0, 1, v)))
    trace = recorder.finish(state.i)
    set_trace = trace.sets[0]
    assert set_trace.degree == [0, 1, 2, 3, 4]
    assert set_trace.Z[0] < 0 < set_trace.Z[1]
    assert set_trace.first_violation["Z"] == 1
    assert trace.steps == [0, 1, 2, 3, 4]


def test_tracked_pairs_need_room():
    """No pairs are drawn when 2 ell exceeds n."""
    assert choose_tracked_pairs(6, 4, 3, make_rng(0)) == []
    pairs = choose_tracked_pairs(10, 4, 3, make_rng(0))
    assert len(pairs) == 3
    assert all(not set(A) & set(B) and len(A) == len(B) == 4 for A, B in pairs)


def test_trace_increments():
    """Largest one-step decrease and increase."""
    assert trace_increments([0.0, 2.0, 1.5, 4.0]) == (0.5, 2.5)
    assert trace_increments([1.0]) == (0.0, 0.0)


def test_subgraph_frequency_empty_pattern():
    """An empty pattern always occurs."""
    result = subgraph_frequency_test([], 5, 20, 10, 3, seed=0)
    assert result.empirical_p == result.predicted_p == 1.0


def test_subgraph_frequency_single_edge():
    """A single r-set is present at step j with probability j / N."""
    n, r, j = 10, 3, 24
    result = subgraph_frequency_test([(0, 1, 2)], j, 3000, n, r, seed=3)
    assert result.predicted_p == pytest.approx(j / math.comb(n, r))
    assert abs(result.empirical_p - result.predicted_p) < 5 * max(result.stderr, 0.01)


def test_subgraph_frequency_rejects_copy():
    """Patterns containing a copy of T^(r) are invalid."""
    from trfree.services.combinatorics import copies_containing

    copy = next(copies_containing((0, 1, 2), 6))
    with pytest.raises(InvalidArgumentError):
        subgraph_frequency_test(list(copy.members()), 5, 10, 6, 3, seed=0)


@pytest.mark.slow
@pytest.mark.parametrize("L, tolerance", [(1, 0.3), (2, 0.4)])
def test_subgraph_frequency_desk_scale(L, tolerance):
    """n=10, r=3, 10^4 runs: empirical frequency within tolerance of (j/N)^L."""
    n, r = 10, 3
    N = math.comb(n, r)
    j = scaling(n, r).i_max
    assert (j / N) ** L >= 0.01
    pattern = [tuple(range(a * r, (a + 1) * r)) for a in range(L)]
    result = subgraph_frequency_test(pattern, j, 10**4, n, r, seed=17)
    assert abs(result.empirical_p - result.predicted_p) <= tolerance * result.predicted_p


@pytest.mark.slow
def test_codegree_statistic():
    """n=20, r=3, 100 runs to i_max: max codegree stays within 5r in most runs."""
    from trfree.utils.helpers import run_streams

    model = scaling(20, 3)
    within = 0
    for run_id in range(100):
        process_seed, _ = run_streams(8, run_id)
        state = process_engine.init(20, 3, process_seed)
        process_engine.run(state, until_i=model.i_max)
        within += max_codegree(state) <= 5 * 3
    assert within >= 90

"""Independence number of T^(r)-free process outputs.

A randomized greedy lower bound, an exact branch-and-bound with a node budget, the
open r-sets inside a vertex set, the heavy (r-1)-sets of a k-set, and the scaling
probe that compares alpha(G) with (n log n)^(1/r) across a grid of n.
"""
import logging
import math
from itertools import combinations

import numpy as np

from trfree.exceptions import InvalidArgumentError
from trfree.models import Hypergraph, MisResult, ProbeRow
from trfree.services import process_engine
from trfree.services.combinatorics import rank, scaling
from trfree.utils.decorators import timed
from trfree.utils.helpers import make_rng, run_streams

logger = logging.getLogger(__name__)

DEFAULT_NODE_BUDGET = 10**7


def graph_of(state):
    """G(i) of a process state as a Hypergraph."""
    return Hypergraph(n=state.n, r=state.r, edges=tuple(e.vertices for e in state.edge_sets()))


def _bits(mask):
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def greedy_independent(graph, seed):
    """Maximal independent set built from a uniformly random vertex order.

    Returns:
        tuple: sorted vertices; its size is a lower bound on alpha.
    """
    rng = make_rng(seed)
    incident = [[] for _ in range(graph.n)]
    for mask in graph.masks():
        for v in _bits(mask):
            incident[v].append(mask)
    chosen = 0
    for v in rng.permutation(graph.n):
        bit = 1 << int(v)
        allowed = chosen | bit
        if all(mask & ~allowed for mask in incident[int(v)]):
            chosen = allowed
    return tuple(_bits(chosen))


def improve_by_swaps(graph, witness, seed, rounds=3):
    """Local search: drop one vertex, re-add greedily, keep any strict improvement."""
    rng = make_rng(seed)
    masks = graph.masks()
    full = (1 << graph.n) - 1

    def can_add(current, v):
        allowed = current | (1 << v)
        return all(mask & ~allowed for mask in masks if mask >> v & 1)

    best = sum(1 << v for v in witness)
    for _ in range(rounds):
        improved = False
        for u in rng.permutation(_bits(best)):
            trial = best & ~(1 << int(u))
            for v in rng.permutation(_bits(full & ~trial)):
                v = int(v)
                if v != int(u) and can_add(trial, v):
                    trial |= 1 << v
            if bin(trial).count("1") > bin(best).count("1"):
                best = trial
                improved = True
                break
        if not improved:
            break
    return tuple(_bits(best))


def exact_mis(graph, node_budget=DEFAULT_NODE_BUDGET, seed=0):
    """Maximum independent set by branch-and-bound.

    At each node the candidate set shrinks by unit propagation (an edge inside the
    candidate with a single unforced vertex loses that vertex). A leaf is reached when
    no edge lies inside the candidate. Otherwise an inner edge with the fewest unforced
    vertices v_1..v_m is chosen and branch j drops v_j while forcing v_1..v_(j-1). The
    bound is |candidate| minus a greedy packing of inner edges with disjoint unforced
    parts.

    Returns:
        MisResult: exact when the budget was not exhausted, otherwise lower/upper bounds.
    """
    incumbent = improve_by_swaps(graph, greedy_independent(graph, seed), seed)
    best = {"size": len(incumbent), "mask": sum(1 << v for v in incumbent)}
    counter = {"nodes": 0, "hit": False}

    def search(cand, forced, inside):
        counter["nodes"] += 1
        while True:
            inside = [mask for mask in inside if mask & cand == mask]
            removed = 0
            for mask in inside:
                free = mask & ~forced
                if free == 0:
                    return -1
                if free & (free - 1) == 0:
                    removed |= free
            if not removed:
                break
            cand &= ~removed
        size = bin(cand).count("1")
        if not inside:
            if size > best["size"]:
                best["size"], best["mask"] = size, cand
            return size

        used = 0
        packed = 0
        for mask in sorted(inside, key=lambda m: bin(m & ~forced).count("1")):
            free = mask & ~forced
            if not free & used:
                used |= free
                packed += 1
        upper = size - packed
        if upper <= best["size"]:
            return upper
        if counter["nodes"] >= node_budget:
            counter["hit"] = True
            return upper

        pivot = min(inside, key=lambda m: bin(m & ~forced).count("1"))
        bound = -1
        prefix = 0
        for v in _bits(pivot & ~forced):
            bound = max(bound, search(cand & ~(1 << v), forced | prefix, inside))
            prefix |= 1 << v
        return bound

    root = search((1 << graph.n) - 1, 0, graph.masks())
    witness = tuple(_bits(best["mask"]))
    exact = not counter["hit"]
    upper = best["size"] if exact else max(root, best["size"])
    if counter["hit"]:
        logger.warning(
            "MIS budget of %s nodes exhausted: %s <= alpha <= %s", node_budget, best["size"], upper
        )
    logger.debug("exact_mis expanded %s nodes", counter["nodes"])
    return MisResult(
        alpha=best["size"] if exact else None,
        lower_bound=best["size"],
        upper_bound=upper,
        witness=witness,
        exact=exact,
        nodes_expanded=counter["nodes"],
        budget_hit=counter["hit"],
    )


def alpha_estimate(result):
    """Exact alpha when known, else the lower bound."""
    return result.alpha if result.exact else result.lower_bound


# --- Quantities inside a vertex set ---
def _checked_vertices(K, n):
    K = sorted(set(K))
    if K and (K[0] < 0 or K[-1] >= n):
        raise InvalidArgumentError(f"vertex set {K} is not inside [0, {n})")
    return K


def open_rsets_inside(state, K):
    """Number of open r-sets contained in K."""
    K = _checked_vertices(K, state.n)
    status = state.status
    return sum(1 for e in combinations(K, state.r) if status[rank(e)] == process_engine.OPEN)


def heavy_family(state, K, threshold):
    """(r-1)-sets X with |N_i(X) & K| >= threshold."""
    K = set(_checked_vertices(K, state.n))
    return [X for X, nbrs in sorted(state.neighborhoods.items()) if len(nbrs & K) >= threshold]


def bad_vertices(state, K, family):
    """Vertices of K lying in the neighbourhoods of two different members of ``family``."""
    K = set(_checked_vertices(K, state.n))
    seen, bad = set(), set()
    for X in family:
        hits = state.neighborhood(X) & K
        bad |= hits & seen
        seen |= hits
    return sorted(bad)


def heuristic_alpha(n, r, edges):
    """Smallest k with C(n,k) (1 - C(k,r)/C(n,r))^edges < 1.

    This is the independence number a uniformly random r-graph with the same number of
    edges would be expected to have.
    """
    N = math.comb(n, r)
    for k in range(r, n + 1):
        share = math.comb(k, r) / N
        if share >= 1:
            return k
        log_expectation = math.log(math.comb(n, k)) + edges * math.log1p(-share)
        if log_expectation < 0:
            return k
    return n


# --- Scaling probe ---
@timed("scaling probe")
def scaling_probe(
    n_grid,
    r,
    runs_per_n,
    seed,
    constants=None,
    node_budget=DEFAULT_NODE_BUDGET,
    drive_to_termination=False,
):
    """alpha of G(min(i_max, M)) across a grid of n, normalised by (n log n)^(1/r).

    Run ``k`` at size ``n`` draws its seed from (seed, n, k). When
    ``drive_to_termination`` is set the same runs continue to G(M) and alpha(G(M)) is
    reported as well.

    Returns:
        list[ProbeRow]
    """
    rows = []
    for n in n_grid:
        model = scaling(n, r, constants)
        alphas, uppers, terminal, exact_count, edge_counts = [], [], [], 0, []
        for run_id in range(runs_per_n):
            process_seed, sampler = run_streams(seed, run_id, salt=(n,))
            state = process_engine.init(n, r, process_seed)
            process_engine.run(state, until_i=model.i_max)
            edge_counts.append(state.i)
            result = exact_mis(graph_of(state), node_budget, seed=sampler)
            exact_count += result.exact
            alphas.append(alpha_estimate(result))
            uppers.append(result.upper_bound)
            if drive_to_termination:
                process_engine.run(state)
                result = exact_mis(graph_of(state), node_budget, seed=sampler)
                terminal.append(alpha_estimate(result))
        mean = float(np.mean(alphas))
        rows.append(
            ProbeRow(
                n=n,
                r=r,
                runs=runs_per_n,
                alpha_mean=mean,
                alpha_std=float(np.std(alphas)),
                alpha_upper_mean=float(np.mean(uppers)),
                ratio=mean / (n * math.log(n)) ** (1 / r),
                exact_fraction=exact_count / runs_per_n,
                alpha_heuristic=heuristic_alpha(n, r, round(float(np.mean(edge_counts)))),
                alpha_terminal_mean=float(np.mean(terminal)) if terminal else None,
            )
        )
        logger.info("probe n=%s r=%s: mean alpha %.3f, ratio %.4f", n, r, mean, rows[-1].ratio)
    return rows

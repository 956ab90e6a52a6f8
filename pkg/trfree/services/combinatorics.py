"""Combinatorial and analytic primitives for the T^(r)-free process.

Colex ranking of r-sets, lazy enumeration of the copies of T^(r) through a given
r-set, the scaling constants N, D, s, i_max and the trajectory functions q, c, f
and f1. Everything here is stateless.
"""
import logging
import math
from functools import lru_cache
from itertools import combinations

from trfree.exceptions import InvalidArgumentError
from trfree.models import ConstantPack, RSet, TrajectoryModel, TriangleCopy

logger = logging.getLogger(__name__)


@lru_cache(maxsize=64)
def binomial_table(n, r):
    """Rows B[v][j] = C(v, j) for 0 <= v <= n, 0 <= j <= r + 1."""
    return tuple(tuple(math.comb(v, j) for j in range(r + 2)) for v in range(n + 1))


def _validated(vertices, n=None):
    ordered = tuple(sorted(vertices))
    if len(set(ordered)) != len(ordered):
        raise InvalidArgumentError(f"r-set {vertices!r} repeats a vertex")
    if ordered and ordered[0] < 0:
        raise InvalidArgumentError(f"r-set {vertices!r} has a negative vertex")
    if n is not None and ordered and ordered[-1] >= n:
        raise InvalidArgumentError(f"r-set {vertices!r} has a vertex outside [0, {n})")
    return ordered


def rank(rset, n=None):
    """Colex rank of an r-set: sum of C(v_j, j) over its sorted vertices v_1 < ... < v_r.

    Args:
        rset: an RSet or any iterable of distinct non-negative vertex ids.
        n (int, optional): when given, every vertex must lie in [0, n).

    Returns:
        int: the rank in [0, C(n, r)).
    """
    vertices = _validated(rset.vertices if isinstance(rset, RSet) else rset, n)
    return sum(math.comb(v, j) for j, v in enumerate(vertices, start=1))


def unrank(idx, n, r):
    """Inverse of :func:`rank` on [0, C(n, r))."""
    total = math.comb(n, r)
    if not 0 <= idx < total:
        raise InvalidArgumentError(f"index {idx} outside [0, {total}) for n={n}, r={r}")
    table = binomial_table(n, r)
    remaining = idx
    top = n - 1
    vertices = []
    for j in range(r, 0, -1):
        while table[top][j] > remaining:
            top -= 1
        vertices.append(top)
        remaining -= table[top][j]
        top -= 1
    return RSet(idx, tuple(reversed(vertices)))


def make_rset(vertices, n):
    """Validate ``vertices`` against [0, n) and return the ranked RSet."""
    ordered = _validated(vertices, n)
    return RSet(rank(ordered), ordered)


def rank_inserted(base, x, table):
    """Colex rank of ``base`` + {x}; ``base`` is sorted and does not contain x."""
    total = 0
    pos = 1
    placed = False
    for v in base:
        if not placed and x < v:
            total += table[x][pos]
            pos += 1
            placed = True
        total += table[v][pos]
        pos += 1
    if not placed:
        total += table[x][pos]
    return total


# --- Scaling and trajectories ---
def copy_degree(n, r):
    """D = (r+1) * C(n-r, r-1): copies of T^(r) through any fixed r-set."""
    return (r + 1) * math.comb(n - r, r - 1)


def distinct_copy_degree(n, r):
    """Copies through a fixed r-set counted as edge sets.

    For r >= 3 a copy is determined by its edges. For r = 2 every graph triangle
    arises from three choices of core vertex, so only D / 3 of the labeled copies
    are distinct constraints.
    """
    D = copy_degree(n, r)
    return D // 3 if r == 2 else D


def scaling(n, r, constants=None, i_max_override=None):
    """Build the TrajectoryModel for (n, r).

    i_max = ceil(zeta * N * D^(-1/r) * (ln N)^(1/r)), t_max = i_max / s. When no copy
    fits on n vertices (n < 2r - 1) the process never closes anything; the time scale
    is then infinite and i_max is N.
    """
    if not n >= r >= 2:
        raise InvalidArgumentError(f"scaling needs n >= r >= 2, got n={n}, r={r}")
    constants = constants or ConstantPack()
    for violation in constants.ordering_violations():
        logger.warning("Constant pack breaks the recorded ordering: %s", violation)

    N = math.comb(n, r)
    D = copy_degree(n, r)
    D_distinct = distinct_copy_degree(n, r)
    if D == 0:
        logger.warning("No copy of T^(%s) fits on %s vertices; time scale is infinite.", r, n)
        s = time_scale = math.inf
        i_max = N
    else:
        s = N / D ** (1 / r)
        time_scale = N / D_distinct ** (1 / r)
        i_max = math.ceil(constants.zeta * time_scale * math.log(N) ** (1 / r))
    if i_max_override is not None:
        i_max = i_max_override
    t_max = i_max / time_scale

    base = (n * math.log(n)) ** (1 / r)
    k = max(1, round(constants.kappa * base))
    ell = max(1, math.floor(constants.lambda_ * base))
    return TrajectoryModel(
        n=n,
        r=r,
        N=N,
        D=D,
        D_distinct=D_distinct,
        s=s,
        time_scale=time_scale,
        i_max=i_max,
        t_max=t_max,
        k=k,
        ell=ell,
        constants=constants,
    )


def q(t, r):
    """Predicted open fraction exp(-t^r)."""
    return math.exp(-(t**r))


def c(t, r):
    """c(t) = -q'(t) = r t^(r-1) q(t)."""
    return r * t ** (r - 1) * q(t, r)


def f(t, W, r):
    """Error function exp(W (t^r + t))."""
    return math.exp(W * (t**r + t))


def f1(t, W, r):
    """f(t) / q(t) = exp((W+1) t^r + W t)."""
    return math.exp((W + 1) * t**r + W * t)


# --- Copies of T^(r) ---
def copies_containing(e, n):
    """Yield every copy of T^(r) on [n] that has ``e`` as a member edge.

    Two branches: ``e`` is a petal (core R is e minus one vertex x, and x joins r-1
    crossing vertices chosen outside e), or ``e`` is the crossing edge (core chosen
    outside e). Nothing is yielded when n < 2r - 1.
    """
    vertices = _validated(e.vertices if isinstance(e, RSet) else e, n)
    r = len(vertices)
    outside = [v for v in range(n) if v not in vertices]
    if n < 2 * r - 1:
        return
    for drop in range(r):
        x = vertices[drop]
        core = vertices[:drop] + vertices[drop + 1 :]
        for extra in combinations(outside, r - 1):
            yield TriangleCopy(core=core, crossing=tuple(sorted((x,) + extra)))
    for core in combinations(outside, r - 1):
        yield TriangleCopy(core=core, crossing=vertices)


def sibling_ranks(vertices, n, r):
    """For each copy through the sorted r-set ``vertices``, yield the ranks of its other r edges.

    Same enumeration order as :func:`copies_containing`, without building objects.
    """
    if n < 2 * r - 1:
        return
    table = binomial_table(n, r)
    outside = [v for v in range(n) if v not in vertices]
    for drop in range(r):
        x = vertices[drop]
        core = vertices[:drop] + vertices[drop + 1 :]
        petal = {y: rank_inserted(core, y, table) for y in outside}
        for extra in combinations(outside, r - 1):
            yield tuple(petal[y] for y in extra) + (rank_inserted(extra, x, table),)
    for core in combinations(outside, r - 1):
        yield tuple(rank_inserted(core, v, table) for v in vertices)


def find_copy(edges, n, r):
    """Return a copy of T^(r) whose r+1 edges all lie in ``edges``, or None."""
    present = {rank(e, n) for e in edges}
    for e in edges:
        for copy in copies_containing(e, n):
            if all(rank(m) in present for m in copy.members()):
                return copy
    return None

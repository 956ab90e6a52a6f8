"""Brute-force reference implementations used to check the incremental engine.

Every function recomputes its answer from the definition by scanning all copies of
T^(r) on [n]. They are slow on purpose and refuse n above ORACLE_MAX_N.
"""
from functools import lru_cache
from itertools import combinations

from trfree.exceptions import ContractViolationError
from trfree.models import RSet, TriangleCopy
from trfree.services.combinatorics import make_rset
from trfree.utils.decorators import oracle_guard


def _as_tuple(e):
    return tuple(sorted(e.vertices if isinstance(e, RSet) else e))


@lru_cache(maxsize=16)
def _all_copies(n, r):
    copies = []
    for core in combinations(range(n), r - 1):
        rest = [v for v in range(n) if v not in core]
        for crossing in combinations(rest, r):
            copies.append(TriangleCopy(core=core, crossing=crossing))
    return tuple(copies)


@lru_cache(maxsize=16)
def _copies_by_member(n, r):
    index = {}
    for copy in _all_copies(n, r):
        members = copy.members()
        for member in members:
            index.setdefault(member, []).append(members)
    return index


@oracle_guard
def oracle_all_copies(n, r):
    """Every copy of T^(r) on [n], one per (core, crossing set)."""
    return list(_all_copies(n, r))


@oracle_guard
def oracle_copies_containing(e, n, r):
    target = _as_tuple(e)
    return [copy for copy in _all_copies(n, r) if target in copy.members()]


@oracle_guard
def oracle_is_Tr_free(edges, n, r):
    """True iff no copy of T^(r) has all r+1 member edges in ``edges``."""
    present = {_as_tuple(e) for e in edges}
    return not any(all(m in present for m in copy.members()) for copy in _all_copies(n, r))


def _split(edges, n, r):
    present = {_as_tuple(e) for e in edges}
    if not oracle_is_Tr_free(edges, n, r):
        raise ContractViolationError("oracle input already contains a copy of T^(r)")
    index = _copies_by_member(n, r)
    opened, closed = set(), set()
    for e in combinations(range(n), r):
        if e in present:
            continue
        blocked = any(
            all(m in present for m in members if m != e) for members in index.get(e, ())
        )
        (closed if blocked else opened).add(make_rset(e, n))
    return opened, closed


@oracle_guard
def oracle_open_set(edges, n, r):
    """O(i) recomputed from E(i): non-edges e for which G + e stays T^(r)-free."""
    return _split(edges, n, r)[0]


@oracle_guard
def oracle_closed_set(edges, n, r):
    """C(i) recomputed from E(i)."""
    return _split(edges, n, r)[1]


@oracle_guard
def oracle_Ce(edges, e, n, r):
    """C_e recomputed by testing every open f for a copy of T^(r) in G + e + f using both."""
    present = {_as_tuple(x) for x in edges}
    target = _as_tuple(e)
    opened = _split(edges, n, r)[0]
    if make_rset(target, n) not in opened:
        raise ContractViolationError(f"{target} is not open")
    candidates = _copies_by_member(n, r).get(target, ())
    result = set()
    for f in opened:
        if f.vertices == target:
            continue
        for members in candidates:
            if f.vertices in members and all(
                m in present for m in members if m not in (target, f.vertices)
            ):
                result.add(f)
                break
    return result

"""Incremental engine for the random greedy T^(r)-free process.

Every r-set of [n] carries a status (Open, Edge, Closed) indexed by its colex rank.
A step samples an open r-set uniformly, turns it into an edge and closes each open
r-set that would now complete a copy of T^(r). A copy reaches r edges only at the
step its r-th edge is added, so scanning the copies through the new edge finds
every newly closed r-set.
"""
import logging
import math
from dataclasses import dataclass, field

from trfree.exceptions import ContractViolationError, InvalidArgumentError
from trfree.models import RSet, RunResult, Status, StepOutcome, Terminated
from trfree.services.combinatorics import make_rset, rank, sibling_ranks, unrank
from trfree.utils.helpers import make_rng

logger = logging.getLogger(__name__)

OPEN = int(Status.OPEN)
EDGE = int(Status.EDGE)
CLOSED = int(Status.CLOSED)


@dataclass
class ProcessState:
    """Full state of one run: statuses, the dense open list, edges, degrees and the RNG.

    ``open_list`` holds the open ranks in arbitrary order and ``open_pos[rank]`` is the
    position of ``rank`` in it (-1 when not open), which makes sampling and deletion O(1).
    ``neighborhoods[A]`` is N_i(A) for every (r-1)-set A of positive degree.
    """

    n: int
    r: int
    N: int
    status: bytearray
    open_list: list
    open_pos: list
    rng: object
    edges: list = field(default_factory=list)
    i: int = 0
    closed_count: int = 0
    neighborhoods: dict = field(default_factory=dict)

    @property
    def open_count(self):
        return len(self.open_list)

    @property
    def degree_rm1(self):
        """d_i(A) for every (r-1)-set A with a positive degree."""
        return {A: len(nbrs) for A, nbrs in self.neighborhoods.items()}

    def degree(self, A):
        return len(self.neighborhoods.get(tuple(sorted(A)), ()))

    def neighborhood(self, A):
        return self.neighborhoods.get(tuple(sorted(A)), frozenset())

    def status_of(self, rset):
        return Status(self.status[rset.rank if isinstance(rset, RSet) else rank(rset, self.n)])

    def edge_sets(self):
        """E(i) as RSets in selection order."""
        return [unrank(idx, self.n, self.r) for idx in self.edges]

    def ranks_with(self, wanted):
        return [idx for idx in range(self.N) if self.status[idx] == wanted]


def init(n, r, seed):
    """Start the process on the empty r-graph G(0) with every r-set open.

    Args:
        n (int): number of vertices.
        r (int): uniformity, at least 2.
        seed: int, SeedSequence or Generator for the process stream.

    Returns:
        ProcessState: i = 0, |O(0)| = C(n, r).
    """
    if not isinstance(n, int) or not isinstance(r, int) or not n >= r >= 2:
        raise InvalidArgumentError(f"process needs integers n >= r >= 2, got n={n!r}, r={r!r}")
    N = math.comb(n, r)
    return ProcessState(
        n=n,
        r=r,
        N=N,
        status=bytearray(N),
        open_list=list(range(N)),
        open_pos=list(range(N)),
        rng=make_rng(seed),
    )


def _remove_open(state, idx):
    pos = state.open_pos[idx]
    last = state.open_list.pop()
    if last != idx:
        state.open_list[pos] = last
        state.open_pos[last] = pos
    state.open_pos[idx] = -1


def step(state):
    """Add one uniformly random open r-set and propagate closures.

    Returns:
        StepOutcome with the chosen r-set and the r-sets closed by it, or
        Terminated(M) when no open r-set is left.
    """
    if not state.open_list:
        return Terminated(state.i)

    status = state.status
    chosen = state.open_list[int(state.rng.integers(len(state.open_list)))]
    _remove_open(state, chosen)
    status[chosen] = EDGE
    state.edges.append(chosen)
    state.i += 1

    vertices = unrank(chosen, state.n, state.r).vertices
    newly_closed = []
    for siblings in sibling_ranks(vertices, state.n, state.r):
        pending = -1
        for idx in siblings:
            current = status[idx]
            if current == EDGE:
                continue
            if current == OPEN and pending == -1:
                pending = idx
                continue
            pending = -2
            break
        if pending >= 0:
            _remove_open(state, pending)
            status[pending] = CLOSED
            newly_closed.append(pending)
        elif pending == -1:
            raise ContractViolationError(f"step {state.i} completed a copy of T^({state.r})")
    state.closed_count += len(newly_closed)

    for x in vertices:
        A = tuple(v for v in vertices if v != x)
        state.neighborhoods.setdefault(A, set()).add(x)

    return StepOutcome(
        chosen=RSet(chosen, vertices),
        newly_closed=[unrank(idx, state.n, state.r) for idx in newly_closed],
    )


def check_partition(state):
    """Verify that statuses, the open list and the edge list describe one partition of [0, N)."""
    counts = [0, 0, 0]
    for value in state.status:
        counts[value] += 1
    problems = []
    if counts[OPEN] != len(state.open_list):
        problems.append(f"{counts[OPEN]} open statuses vs open list of {len(state.open_list)}")
    if counts[EDGE] != len(state.edges) or len(state.edges) != state.i:
        problems.append(f"{counts[EDGE]} edge statuses, {len(state.edges)} edges, i={state.i}")
    if counts[CLOSED] != state.closed_count:
        problems.append(f"{counts[CLOSED]} closed statuses vs counter {state.closed_count}")
    for pos, idx in enumerate(state.open_list):
        if state.open_pos[idx] != pos or state.status[idx] != OPEN:
            problems.append(f"open list entry {idx} at {pos} is inconsistent")
            break
    if problems:
        raise ContractViolationError("; ".join(problems))


def run(state, until_i=None, on_step=None, check_every_step=False):
    """Repeat :func:`step` until step ``until_i`` is reached or the process terminates.

    Args:
        state (ProcessState): advanced in place.
        until_i (int, optional): stop once ``state.i == until_i``; None runs to termination.
        on_step (callable, optional): called as ``on_step(state, outcome)`` after every step.
        check_every_step (bool): run :func:`check_partition` after every step.

    Returns:
        RunResult: the step reached, whether the process terminated, and E(i).
    """
    terminated = False
    while until_i is None or state.i < until_i:
        outcome = step(state)
        if isinstance(outcome, Terminated):
            terminated = True
            break
        if check_every_step:
            check_partition(state)
        if on_step is not None:
            on_step(state, outcome)
    if not terminated and not state.open_list:
        terminated = True
    if terminated:
        logger.debug("process n=%s r=%s terminated with M=%s", state.n, state.r, state.i)
    return RunResult(i=state.i, terminated=terminated, edges=state.edge_sets())


def closure_ranks(state, idx, vertices=None):
    """Ranks of C_e(i) for the open r-set of rank ``idx``."""
    if vertices is None:
        vertices = unrank(idx, state.n, state.r).vertices
    status = state.status
    found = set()
    for siblings in sibling_ranks(vertices, state.n, state.r):
        pending = -1
        for other in siblings:
            current = status[other]
            if current == EDGE:
                continue
            if current == OPEN and pending == -1:
                pending = other
                continue
            pending = -2
            break
        if pending >= 0:
            found.add(pending)
    return found


def compute_Ce(state, e):
    """C_e(i): open f such that some copy holds e and f with its other r-1 edges in E(i)."""
    rset = e if isinstance(e, RSet) else make_rset(e, state.n)
    if state.status[rset.rank] != OPEN:
        raise InvalidArgumentError(f"{rset!r} is not open at step {state.i}")
    return {unrank(idx, state.n, state.r) for idx in closure_ranks(state, rset.rank, rset.vertices)}

"""Helpers for building hand-crafted process states."""
from trfree.services import process_engine
from trfree.services.combinatorics import rank


class _FixedChoice:
    """Picks the open-list position of one given rank."""

    def __init__(self, state, target):
        self.state = state
        self.target = target

    def integers(self, high):
        return self.state.open_pos[self.target]


def force_edge(state, vertices):
    """Add the open r-set ``vertices`` as the next edge through step()."""
    target = rank(vertices)
    assert state.open_pos[target] >= 0, f"{vertices} is not open"
    saved = state.rng
    state.rng = _FixedChoice(state, target)
    try:
        return process_engine.step(state)
    finally:
        state.rng = saved


def state_with_edges(n, r, edges, seed=0):
    """A fresh state with ``edges`` added in order."""
    state = process_engine.init(n, r, seed)
    for vertices in edges:
        force_edge(state, vertices)
    return state

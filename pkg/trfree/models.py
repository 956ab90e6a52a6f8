"""
Domain models for the T^(r)-free process laboratory.

This module defines the enums and dataclasses shared by every service: r-sets and
copies of T^(r), the trajectory model with its constant pack, per-step engine
outcomes, observation records, martingale traces, independence results and the
run configuration.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Optional


# --- Enums ---
class Status(enum.IntEnum):
    OPEN = 0
    EDGE = 1
    CLOSED = 2


class Mode(enum.Enum):
    trajectory = "trajectory"
    independence = "independence"
    martingale = "martingale"
    subgraph_freq = "subgraph-freq"
    oracle_test = "oracle-test"


class OutputFormat(enum.Enum):
    csv = "csv"
    json = "json"


# --- Combinatorial atoms ---
@dataclass(frozen=True, order=True)
class RSet:
    """A strictly increasing r-subset of [0, n) together with its colex rank."""

    rank: int
    vertices: tuple

    def __iter__(self):
        return iter(self.vertices)

    def __len__(self):
        return len(self.vertices)

    def __contains__(self, vertex):
        return vertex in self.vertices

    def __repr__(self):
        return f"<RSet {set(self.vertices)} #{self.rank}>"


@dataclass(frozen=True)
class TriangleCopy:
    """A copy of T^(r): an (r-1)-set core R and r crossing vertices outside R.

    The member edges are the petals b_i = R + {crossing[i]} and the crossing edge a.
    """

    core: tuple
    crossing: tuple

    @property
    def r(self):
        return len(self.crossing)

    @property
    def petals(self):
        return tuple(tuple(sorted(self.core + (x,))) for x in self.crossing)

    @property
    def crossing_edge(self):
        return tuple(sorted(self.crossing))

    def members(self):
        """The r+1 member edges as sorted vertex tuples, petals first."""
        return self.petals + (self.crossing_edge,)


# --- Trajectory model ---
@dataclass(frozen=True)
class ConstantPack:
    """Desk-scale values for the constants 1/kappa << zeta << 1/W << epsilon << gamma."""

    zeta: float = 0.4
    gamma: float = 0.3
    epsilon: float = 0.2
    W: float = 4.0
    kappa: float = 4.0

    @property
    def lambda_(self):
        return (self.kappa - self.gamma) / 2

    def ordering_violations(self):
        """Names of the recorded inequalities that this pack does not satisfy."""
        chain = [
            ("1/kappa < zeta", 1 / self.kappa, self.zeta),
            ("zeta < 1/W", self.zeta, 1 / self.W),
            ("1/W < epsilon", 1 / self.W, self.epsilon),
            ("epsilon < gamma", self.epsilon, self.gamma),
        ]
        return [name for name, low, high in chain if not low < high]


@dataclass(frozen=True)
class TrajectoryModel:
    n: int
    r: int
    N: int
    D: int
    D_distinct: int
    s: float
    time_scale: float
    i_max: int
    t_max: float
    k: int
    ell: int
    constants: ConstantPack = field(default_factory=ConstantPack)

    def t(self, i):
        """Continuous time of step i."""
        return i / self.time_scale

    @property
    def open_band(self):
        return self.N ** (1 - self.constants.gamma)

    @property
    def ce_band(self):
        return self.N ** (-self.constants.gamma) * self.D_distinct ** (1 / self.r)

    @property
    def tau_threshold(self):
        """k / n^(2 epsilon), compared as a real number."""
        return self.k / self.n ** (2 * self.constants.epsilon)

    @property
    def degree_thresholds(self):
        base = self.n * math.log(self.n)
        eps = self.constants.epsilon
        low = eps * base ** (1 / self.r)
        high = eps * base ** (1 / (self.r - 1)) if self.r > 1 else math.inf
        return {"eps_nlogn_pow_1_over_r": low, "eps_nlogn_pow_1_over_r_minus_1": high}


# --- Engine ---
@dataclass
class StepOutcome:
    chosen: RSet
    newly_closed: list


@dataclass(frozen=True)
class Terminated:
    """Returned by step() once O(i) is empty; M is the final edge count."""

    M: int


@dataclass
class RunResult:
    i: int
    terminated: bool
    edges: list

    @property
    def M(self):
        return self.i if self.terminated else None


# --- Observables ---
@dataclass
class ObservationRecord:
    run_id: int
    i: int
    t: float
    open_count: int
    q_pred: float
    open_band: float
    ce_samples: list
    c_pred: float
    ce_band: float
    max_deg_rm1: int
    deg_pred: float
    max_codeg_rm1: int
    edges_count: int

    @property
    def ce_mean(self):
        return sum(self.ce_samples) / len(self.ce_samples) if self.ce_samples else None

    @property
    def ce_min(self):
        return min(self.ce_samples) if self.ce_samples else None

    @property
    def ce_max(self):
        return max(self.ce_samples) if self.ce_samples else None


@dataclass
class SetTrace:
    """Y+/Y-/Z sequences for one tracked (r-1)-set A."""

    A: tuple
    Q: list = field(default_factory=list)
    degree: list = field(default_factory=list)
    Y_plus: list = field(default_factory=list)
    Y_minus: list = field(default_factory=list)
    Z: list = field(default_factory=list)
    first_violation: dict = field(default_factory=dict)


@dataclass
class PairTrace:
    """X+/X- sequences for one tracked pair of disjoint ell-sets."""

    A: tuple
    B: tuple
    Q_AB: list = field(default_factory=list)
    X_plus: list = field(default_factory=list)
    X_minus: list = field(default_factory=list)
    tau: Optional[int] = None
    tau_reached: bool = False
    first_violation: dict = field(default_factory=dict)


@dataclass
class MartingaleTrace:
    run_id: int
    S: int
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    sets: list = field(default_factory=list)
    pairs: list = field(default_factory=list)


# --- Independence ---
@dataclass(frozen=True)
class Hypergraph:
    """An r-graph on [0, n) given by sorted vertex tuples."""

    n: int
    r: int
    edges: tuple

    def masks(self):
        return [sum(1 << v for v in e) for e in self.edges]

    def is_independent(self, vertices):
        chosen = set(vertices)
        return not any(chosen.issuperset(e) for e in self.edges)


@dataclass
class MisResult:
    alpha: Optional[int]
    lower_bound: int
    upper_bound: int
    witness: tuple
    exact: bool
    nodes_expanded: int
    budget_hit: bool


@dataclass
class ProbeRow:
    n: int
    r: int
    runs: int
    alpha_mean: float
    alpha_std: float
    alpha_upper_mean: float
    ratio: float
    exact_fraction: float
    alpha_heuristic: int
    alpha_terminal_mean: Optional[float] = None


# --- Configuration ---
@dataclass
class RunConfig:
    n: int
    r: int
    mode: Mode = Mode.trajectory
    master_seed: int = 0
    runs: int = 1
    constants: ConstantPack = field(default_factory=ConstantPack)
    checkpoint_every: Optional[int] = None
    ce_sample_size: int = 32
    tracked_A_count: int = 16
    tracked_pair_count: int = 4
    i_max_override: Optional[int] = None
    drive_to_termination: bool = False
    output_path: str = "out"
    format: OutputFormat = OutputFormat.csv
    pattern_size: int = 1
    pattern_step: Optional[int] = None
    oracle_checkpoints: int = 10
    mis_node_budget: Optional[int] = None

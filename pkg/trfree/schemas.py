"""
T^(r)-free process laboratory - Marshmallow Schemas

This module defines schemas for loading and validating run configurations and for
dumping every output record (checkpoints, aggregates, martingale traces,
independence rows, subgraph frequencies, oracle reports) with a fixed column order.
"""

from marshmallow import Schema, ValidationError, fields, post_load, validate, validates_schema

from trfree.models import ConstantPack, Mode, OutputFormat, RunConfig

positive = validate.Range(min=0, min_inclusive=False)


class ConstantPackSchema(Schema):
    """Schema for the constant pack (zeta, gamma, epsilon, W, kappa)."""

    zeta = fields.Float(load_default=0.4, validate=positive)
    gamma = fields.Float(load_default=0.3, validate=positive)
    epsilon = fields.Float(load_default=0.2, validate=positive)
    W = fields.Float(load_default=4.0, validate=positive)
    kappa = fields.Float(load_default=4.0, validate=positive)

    @post_load
    def make_pack(self, data, **kwargs):
        return ConstantPack(**data)


class RunConfigSchema(Schema):
    """Schema for RunConfig; CLI flags and config files both load through it."""

    n = fields.Int(required=True, validate=validate.Range(min=2))
    r = fields.Int(required=True, validate=validate.Range(min=2))
    mode = fields.Enum(Mode, by_value=True, load_default=Mode.trajectory)
    master_seed = fields.Int(load_default=0, validate=validate.Range(min=0))
    runs = fields.Int(load_default=1, validate=validate.Range(min=1))
    constants = fields.Nested(ConstantPackSchema, load_default=lambda: ConstantPack())
    checkpoint_every = fields.Int(load_default=None, allow_none=True, validate=validate.Range(min=1))
    ce_sample_size = fields.Int(load_default=32, validate=validate.Range(min=1))
    tracked_A_count = fields.Int(load_default=16, validate=validate.Range(min=0))
    tracked_pair_count = fields.Int(load_default=4, validate=validate.Range(min=0))
    i_max_override = fields.Int(load_default=None, allow_none=True, validate=validate.Range(min=0))
    drive_to_termination = fields.Bool(load_default=False)
    output_path = fields.String(load_default="out")
    format = fields.Enum(OutputFormat, by_value=True, load_default=OutputFormat.csv)
    pattern_size = fields.Int(load_default=1, validate=validate.Range(min=0))
    pattern_step = fields.Int(load_default=None, allow_none=True, validate=validate.Range(min=0))
    oracle_checkpoints = fields.Int(load_default=10, validate=validate.Range(min=0))
    mis_node_budget = fields.Int(load_default=None, allow_none=True, validate=validate.Range(min=1))

    @validates_schema
    def check_sizes(self, data, **kwargs):
        if data.get("n", 0) < data.get("r", 0):
            raise ValidationError("n must be at least r", field_name="n")
        if data.get("mode") == Mode.subgraph_freq and data["pattern_size"] * data["r"] > data["n"]:
            raise ValidationError(
                "pattern_size disjoint r-sets do not fit on n vertices", field_name="pattern_size"
            )

    @post_load
    def make_config(self, data, **kwargs):
        return RunConfig(**data)


class TrajectoryModelSchema(Schema):
    """Derived scaling quantities written into the manifest."""

    n = fields.Int()
    r = fields.Int()
    N = fields.Int()
    D = fields.Int()
    D_distinct = fields.Int()
    s = fields.Float()
    time_scale = fields.Float()
    i_max = fields.Int()
    t_max = fields.Float()
    k = fields.Int()
    ell = fields.Int()
    open_band = fields.Float()
    ce_band = fields.Float()
    tau_threshold = fields.Float()
    degree_thresholds = fields.Dict(keys=fields.String(), values=fields.Float())
    codegree_threshold = fields.Function(lambda model: 5 * model.r)
    constants = fields.Nested(ConstantPackSchema)


class CheckpointRowSchema(Schema):
    """One row per (run_id, checkpoint); column order is part of the output contract."""

    run_id = fields.Int()
    i = fields.Int()
    t = fields.Float()
    open_count = fields.Int()
    q_pred = fields.Float()
    ce_mean = fields.Float(allow_none=True)
    ce_min = fields.Float(allow_none=True)
    ce_max = fields.Float(allow_none=True)
    c_pred = fields.Float()
    max_deg_rm1 = fields.Int()
    deg_pred = fields.Float()
    max_codeg = fields.Int(attribute="max_codeg_rm1")


AGGREGATED_METRICS = ("open_count", "ce_mean", "max_deg_rm1", "max_codeg")
AGGREGATE_STATS = ("mean", "std", "min", "max")


_aggregate_fields = {
    "i": fields.Int(),
    "t": fields.Float(),
    "runs": fields.Int(),
    "q_pred": fields.Float(),
    "c_pred": fields.Float(),
    "deg_pred": fields.Float(),
    "q_lower": fields.Float(),
    "q_upper": fields.Float(),
    "c_lower": fields.Float(),
    "c_upper": fields.Float(),
}
_aggregate_fields.update(
    (f"{metric}_{stat}", fields.Float(allow_none=True))
    for metric in AGGREGATED_METRICS
    for stat in AGGREGATE_STATS
)
# Per-checkpoint statistics across runs, keyed by step i.
AggregateRowSchema = Schema.from_dict(_aggregate_fields, name="AggregateRowSchema")


class TraceRowSchema(Schema):
    """Long-format martingale trace: one row per (run, tracked object, step)."""

    run_id = fields.Int()
    kind = fields.String()
    key = fields.String()
    i = fields.Int()
    t = fields.Float()
    Q = fields.Int(allow_none=True)
    degree = fields.Int(allow_none=True)
    Y_plus = fields.Float(allow_none=True)
    Y_minus = fields.Float(allow_none=True)
    Z = fields.Float(allow_none=True)
    Q_AB = fields.Int(allow_none=True)
    X_plus = fields.Float(allow_none=True)
    X_minus = fields.Float(allow_none=True)


class TraceSummarySchema(Schema):
    """First band violation and observed one-step bounds of every trace."""

    run_id = fields.Int()
    kind = fields.String()
    key = fields.String()
    S = fields.Int(allow_none=True)
    tau = fields.Int(allow_none=True)
    tau_reached = fields.Bool(allow_none=True)
    sequence = fields.String()
    first_violation = fields.Int(allow_none=True)
    max_decrease = fields.Float()
    max_increase = fields.Float()


class IndependenceRowSchema(Schema):
    """alpha of one run at one stage, plus the open r-sets and heavy sets of a random k-set."""

    run_id = fields.Int()
    stage = fields.String()
    i = fields.Int()
    alpha = fields.Int(allow_none=True)
    lower_bound = fields.Int()
    upper_bound = fields.Int()
    exact = fields.Bool()
    nodes_expanded = fields.Int()
    greedy = fields.Int()
    ratio = fields.Float()
    k = fields.Int()
    open_inside_k = fields.Int(allow_none=True)
    q_pred_inside_k = fields.Float(allow_none=True)
    heavy_sets = fields.Int(allow_none=True)
    heavy_bound = fields.Float()
    bad_vertices = fields.Int(allow_none=True)


class SubgraphFrequencySchema(Schema):
    L = fields.Int()
    j = fields.Int()
    runs = fields.Int()
    hits = fields.Int()
    empirical_p = fields.Float()
    predicted_p = fields.Float()
    stderr = fields.Float()


class OracleReportSchema(Schema):
    run_id = fields.Int()
    M = fields.Int()
    steps_checked = fields.Int()
    ce_checks = fields.Int()
    mismatches = fields.Int()
    first_mismatch_step = fields.Int(allow_none=True)
    maximal = fields.Bool()


class ProbeRowSchema(Schema):
    n = fields.Int()
    r = fields.Int()
    runs = fields.Int()
    alpha_mean = fields.Float()
    alpha_std = fields.Float()
    alpha_upper_mean = fields.Float()
    ratio = fields.Float()
    exact_fraction = fields.Float()
    alpha_heuristic = fields.Int()
    alpha_terminal_mean = fields.Float(allow_none=True)


# Instantiate schemas
run_config_schema = RunConfigSchema()
trajectory_model_schema = TrajectoryModelSchema()
checkpoint_rows_schema = CheckpointRowSchema(many=True)
aggregate_rows_schema = AggregateRowSchema(many=True)
trace_rows_schema = TraceRowSchema(many=True)
trace_summary_schema = TraceSummarySchema(many=True)
independence_rows_schema = IndependenceRowSchema(many=True)
subgraph_frequency_schema = SubgraphFrequencySchema(many=True)
oracle_report_schema = OracleReportSchema(many=True)
probe_rows_schema = ProbeRowSchema(many=True)

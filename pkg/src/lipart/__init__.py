"""Exchangeable Markov processes on labeled partitions driven by partition operators."""

from .errors import CapacityError, ConfigurationError, DomainError, InvariantError, NotStronglyLipschitz
from .measures import (
    ArrayMeasure,
    Cyclic,
    DirichletSimplex,
    DiscreteOperators,
    DiscreteSimplex,
    OneColumn,
    PointSimplex,
    ProductColumns,
    RankedSimplexPoint,
    SelfSimilar,
    exact_level_map_measure,
    exact_level_measure,
    measure_from_spec,
    measure_to_spec,
    nonidentity_mass,
    point,
    sample_labeled_paintbox,
    sample_lipschitz_map,
    sample_operator,
    sample_ranked_paintbox,
    sample_simplex,
)
from .operators import (
    ColumnArray,
    MapTable,
    PartitionOperator,
    SetMatrix,
    array_apply,
    format_operator,
    is_lipschitz_tables,
    is_strongly_lipschitz,
    op_apply,
    op_cyclic,
    op_from_coag,
    op_from_table,
    op_identity,
    op_multiply,
    op_relabel,
    op_restrict,
    op_transpose,
    operator_space,
    parse_operator,
)
from .partitions import (
    Injection,
    LabeledPartition,
    Permutation,
    SetPartition,
    blocks,
    coag,
    distance_exponent,
    enumerate_partitions,
    format_labeled,
    format_set_partition,
    parse_labeled,
    parse_set_partition,
    project_injection,
    relabel,
    restrict,
    restrict_set,
)
from .simulate import (
    FlowTrajectory,
    SimplexPoint,
    StochasticMatrix,
    Trajectory,
    estimate_semigroup,
    frequency,
    operator_frequency,
    simplex_chain,
    simulate_counterexample,
    simulate_ct,
    simulate_dt,
    simulate_flow,
    simulate_selfsimilar,
)
from .verify import (
    RateTable,
    TestReport,
    consistency_test,
    empirical_rates,
    exchangeability_test,
    markov_violation_probe,
    rate_oracle_product,
    rate_oracle_selfsimilar,
    strong_support_check,
    tv_distance,
)

__version__ = "0.1.0"

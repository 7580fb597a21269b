"""CDF-model-driven in-memory joins, classical baselines, a bandit algorithm
selector, and a benchmark harness."""

from .baselines import (
    ChainHashIndex,
    OracleTooLargeError,
    hash_inlj,
    nlj_oracle,
    npj_join,
    radix_join,
    rmi_inlj,
    sampled_hash_join,
    smj_join,
)
from .bench import ALGORITHMS, BenchReport, make_join_inputs, run_bench, run_join
from .buffers import BufferPlan, buffered_probe, plan_buffers
from .data import (
    CorruptKeyFileError,
    DatasetSpec,
    GenerationExhaustedError,
    Relation,
    gen_dataset,
    inject_duplicates,
    load_keys_file,
    make_relation,
    write_keys_file,
)
from .gapped import GappedRmiIndex, build_grmi, exponential_search
from .learned_hash import SplineHashIndex, build_spline_hash
from .lsj import (
    LsjConfig,
    LsjCostParams,
    ModelMismatchError,
    PartitionedRelation,
    SortedRelation,
    cdf_bitonic_sort,
    chunked_join,
    estimate_lsj_cost,
    lsj_join,
    range_partition,
    sample_train,
)
from .models import (
    PosPrediction,
    RadixSplineIndex,
    RecursiveModelIndex,
    partition_index,
    train_radix_spline,
    train_rmi,
)
from .optimizer import (
    ARMS,
    BanditState,
    QueryMeta,
    featurize,
    load_experience_log,
    record_outcome,
    replay_experience,
    save_experience_log,
    select_arm,
)
from .results import JoinResult, LookupStats, PhaseBreakdown, SortStats

__version__ = "0.1.0"

"""dagcachesim: cache-eviction policies and a cluster simulator for
DAG-structured data-parallel jobs.

The headline metric is the effective cache hit ratio: a hit only counts as
effective when every input block of the reading task is memory-resident,
because a task is only sped up when its whole input fits in memory. The
``lerc`` policy optimizes that metric by evicting the block with the fewest
references from tasks that caching can still speed up.
"""

from ._core import HAVE_COMPILED, available_backends, derive_seed
from .dag import (
    TIER_DISK,
    TIER_MEMORY,
    TIER_NONE,
    BlockMeta,
    BlockRef,
    JobDag,
    PeerGroup,
    TaskSpec,
    peer_groups,
    reference_counts,
    validate_dag,
)
from .errors import (
    CyclicDependency,
    DagCacheSimError,
    DagValidationError,
    DanglingBlock,
    DoubleComplete,
    DuplicateProducer,
    InsufficientCapacity,
    InvalidWorkload,
    ParseError,
    SimError,
    UnknownBlock,
    UnknownTask,
)
from .policy import (
    POLICIES,
    TIE_BREAKS,
    BlockIndex,
    CacheState,
    EvictionDecision,
    GroupNotice,
    PolicyState,
    WorkerCache,
    effective_reference_count_oracle,
)
from .protocol import Message, MessageLog
from .sim import (
    AccessRecord,
    ClusterConfig,
    EvictionRecord,
    SimReport,
    StaircasePoint,
    classify_access,
    run,
    staircase_experiment,
)
from .workload_io import dump_workload, parse_workload
from .workloads import (
    InsertEvent,
    Placement,
    Workload,
    gen_fig1,
    gen_multi_tenant,
    gen_random_dag,
    gen_zip,
    multi_tenant_workload,
)

__version__ = "0.1.0"

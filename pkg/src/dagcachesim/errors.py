"""Exception hierarchy shared across the package."""


class DagCacheSimError(Exception):
    """Base class for all errors raised by dagcachesim."""


class DagValidationError(DagCacheSimError):
    """A job DAG violates a structural invariant."""


class CyclicDependency(DagValidationError):
    """The producer relation of a job DAG contains a cycle."""


class DanglingBlock(DagValidationError):
    """A task input is neither a source block nor any task's output."""


class DuplicateProducer(DagValidationError):
    """A block is produced more than once (two tasks, or a task and a source)."""


class InvalidWorkload(DagCacheSimError):
    """A workload is structurally broken beyond single-DAG validation."""


class ParseError(DagCacheSimError):
    """A workload file could not be parsed.

    Carries the 1-based line number of the offending line.
    """

    def __init__(self, message: str, lineno: int = 0):
        super().__init__(f"line {lineno}: {message}" if lineno else message)
        self.lineno = lineno


class UnknownBlock(DagCacheSimError):
    """An operation referenced a block the cache has never heard of."""


class UnknownTask(DagCacheSimError):
    """An operation referenced a task that is not part of any loaded job."""


class DoubleComplete(DagCacheSimError):
    """A task was reported complete twice."""


class InsufficientCapacity(DagCacheSimError):
    """The cache cannot free enough space, even evicting everything evictable."""


class SimError(DagCacheSimError):
    """The simulator reached an inconsistent state (e.g. scheduling deadlock)."""

"""blockfuzz: block-diagram model fuzzer for HDL synthesis and simulation tools."""

__version__ = "0.1.0"

from .catalog import (  # noqa: F401
    BOOL,
    BlockCatalog,
    BlockGroup,
    BlockKind,
    SamplePeriod,
    SignalType,
    Signedness,
    TypeRuleViolation,
    UnknownBlockKind,
    default_catalog,
    infer_output_type,
    lookup_kind,
    sfix,
    ufix,
)
from .graph import (  # noqa: F401
    BlockInstance,
    ComplexityMetrics,
    Connection,
    ConstraintViolated,
    ModelGraph,
    NetLocation,
    Violation,
    deserialize,
    insert_block,
    metrics,
    serialize,
    validate,
)

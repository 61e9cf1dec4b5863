"""Annotation-driven symbolic analysis of EVM contracts."""

__version__ = "0.1.0"

from .chain_client import ChainClient, ChainResolver, NodeEndpoint, Unresolvable  # noqa: E402
from .cli import AnalysisConfig, AnalysisError, Report, run  # noqa: E402
from .traces import TraceKind, TransactionTrace, chain, extract_traces  # noqa: E402
from .violations import ConfidenceLevel, Violation, classify, resolve_storage_member  # noqa: E402

__all__ = [
    "AnalysisConfig", "AnalysisError", "ChainClient", "ChainResolver", "ConfidenceLevel", "NodeEndpoint",
    "Report", "TraceKind", "TransactionTrace", "Unresolvable", "Violation", "__version__", "chain",
    "classify", "extract_traces", "resolve_storage_member", "run",
]

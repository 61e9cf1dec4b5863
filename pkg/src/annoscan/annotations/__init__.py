"""Annotation parsing, source rewriting, compilation and storage layouts."""

from .compiler import CompileError, CompileOutput, ContractArtifacts, SourceMapEntry, compile_sources, decode_source_map
from .labels import SourceLabeler, label_states
from .layout import Member, StorageLayout, compute_layout
from .model import CONSTRUCTOR, Annotation, AnnotationKind, Diagnostic, ParseResult, Span, parse_annotations, scan
from .rewrite import RewriteError, RewriteResult, check_identifiers, rewrite, rewrite_sources

__all__ = [
    "CONSTRUCTOR", "Annotation", "AnnotationKind", "CompileError", "CompileOutput", "ContractArtifacts",
    "Diagnostic", "Member", "ParseResult", "RewriteError", "RewriteResult", "SourceLabeler", "SourceMapEntry",
    "Span", "StorageLayout", "check_identifiers", "compile_sources", "compute_layout", "decode_source_map",
    "label_states", "parse_annotations", "rewrite", "rewrite_sources", "scan",
]

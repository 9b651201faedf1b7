"""Benchmark construction and evaluation for typed knowledge-graph link prediction."""

from .errors import ConfigError, DataError, KGBenchError, ProtocolError, RuntimeFailure, SchemaError
from .graph import EntityId, Graph, Inference, Polarity, Triple, canonical_form, graph_stats, is_trivially_inferable
from .ingest import (
    GraphOptions,
    QualitySetting,
    apply_quality_filter,
    assemble_graph,
    build_graph,
    filter_sources_and_relations,
    infer_true_negatives,
    make_directed,
    make_undirected,
    parse_edges,
    read_edges,
)
from .metrics import evaluate, hits_at_k, mean_reciprocal_rank, pr_auc, rank_entity, roc_auc
from .schema import RelationDef, RelationSchema, read_schema, validate_schema
from .split import Split, SplitSpec, random_split, sample_negatives, time_slice_split

__version__ = "0.1.0"

"""
Building a typed graph from raw edges
=====================================

Raw edge files are parsed, quality-filtered, merged and checked against
a relation schema before anything else happens.
"""

from importlib import resources

from kgbench.graph import graph_stats
from kgbench.ingest import GraphOptions, build_graph, read_edges, read_thresholds
from kgbench.schema import read_schema

toy = resources.files("kgbench") / "data" / "toy"
schema = read_schema(toy / "schema.tsv")
for rel in schema:
    print(rel.name, rel.domain, "->", rel.range, "symmetric" if rel.symmetric else "")

# %%
# Parsing keeps going past bad lines and records them in the report.
raw, report = read_edges(toy / "edges.tsv", schema)
print(len(raw), "parsed triples,", len(report.errors), "errors")

# %%
# Only edges scoring above the per-source "medium" threshold survive.
thresholds = read_thresholds(toy / "thresholds.tsv")
graph, report = build_graph(raw, schema, GraphOptions(quality="medium", thresholds=thresholds), report)
print(report.dropped)

stats = graph_stats(graph)
print(stats.entities_per_type)
print(stats.triples_per_relation)

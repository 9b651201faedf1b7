"""
Scoring through a subprocess
============================

Any program that speaks the line protocol can be evaluated.  Here a
saved model is served by the bundled reference scorer and the result is
compared with scoring it in process.
"""

import os
import sys
import tempfile

from kgbench.embed import EarlyStopping, Hyperparams, save_model, train
from kgbench.ingest import GraphOptions, build_graph, parse_edges
from kgbench.metrics import evaluate
from kgbench.protocol import evaluate_external
from kgbench.split import SplitSpec, random_split
from kgbench.synthetic import SyntheticSpec, synthesize

corpus = synthesize(SyntheticSpec(entity_counts={"GENE": 60, "DIS": 40}, edge_count=800, seed=1))
raw, _ = parse_edges(corpus.lines, corpus.schema)
graph, _ = build_graph(raw, corpus.schema, GraphOptions())
split = random_split(graph, SplitSpec(seed=1))
model, _ = train("transR", split, Hyperparams(dim=16, epochs=20, seed=1), EarlyStopping(enabled=False))

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "model.tsv")
    save_model(model, path)
    external = evaluate_external([sys.executable, "-m", "kgbench.protocol", "model", path], split)

local = evaluate(model, split)
print("in process :", local["mrr"])
print("subprocess :", external["mrr"])

# %%
# A scorer that ties everything gets the expected rank (n + 1) / 2.
flat = evaluate_external([sys.executable, "-m", "kgbench.protocol", "constant"], split)
print("constant scorer MRR:", flat["mrr"])

"""Synthetic benchmark corpora with planted translational structure.

Entities get random latent vectors and every relation a latent
translation.  A relation's planted edges are its top-scoring typed pairs
under ``-||e_h + v_r - e_t||``; a fraction of each relation's edges is
replaced by uniform typed noise.  Relation vectors follow the schema:
symmetric relations translate by zero, inverse pairs by opposite
vectors and children reuse their parent's vector, so the planted edges
respect the schema semantics.
"""

from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import rng as rngmod
from .errors import ConfigError
from .schema import RelationDef, RelationSchema, validate_schema, write_schema

DEFAULT_THRESHOLDS = {"srcA": (0.7, 0.5, 0.3), "srcB": (0.8, 0.6, 0.4)}


def default_relations(gene: str = "GENE", dis: str = "DIS") -> list[RelationDef]:
    return [
        RelationDef("interacts", gene, gene, symmetric=True),
        RelationDef("regulates", gene, gene, inverse_of="regulated_by"),
        RelationDef("regulated_by", gene, gene, inverse_of="regulates"),
        RelationDef("associated", gene, dis),
        RelationDef("causes", gene, dis, parents={"associated"}, disjoint_with={"prevents"}),
        RelationDef("prevents", gene, dis, disjoint_with={"causes"}),
    ]


@dataclass
class SyntheticSpec:
    entity_counts: Mapping[str, int] = field(default_factory=lambda: {"GENE": 150, "DIS": 150})
    relations: list[RelationDef] = field(default_factory=default_relations)
    planted_dim: int = 8
    edge_count: int | Mapping[str, int] = 3000
    noise: float = 0.1
    seed: int = 0
    thresholds: Mapping[str, tuple[float, float, float]] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    source_negatives: int = 0
    start_date: dt.date = dt.date(2015, 1, 1)
    days: int = 2000
    require_features: bool = True

    def schema(self) -> RelationSchema:
        return validate_schema(self.relations)

    def counts(self) -> dict[str, int]:
        names = [r.name for r in self.relations]
        if isinstance(self.edge_count, Mapping):
            missing = set(names) - set(self.edge_count)
            if missing:
                raise ConfigError(f"edge counts missing for {sorted(missing)}")
            return {n: int(self.edge_count[n]) for n in names}
        base, extra = divmod(int(self.edge_count), len(names))
        return {n: base + (i < extra) for i, n in enumerate(names)}


def _check(spec: SyntheticSpec, schema: RelationSchema):
    if not 0.0 <= spec.noise <= 1.0:
        raise ConfigError("noise fraction must be in [0, 1]")
    if spec.planted_dim < 1:
        raise ConfigError("planted_dim must be positive")
    for nt in schema.node_types:
        if spec.entity_counts.get(nt, 0) < 1:
            raise ConfigError(f"node type {nt} needs at least one entity")
    if spec.require_features:
        rels = list(schema)
        if not any(r.symmetric for r in rels):
            raise ConfigError("synthetic schema needs a symmetric relation")
        if not any(r.inverse_of for r in rels):
            raise ConfigError("synthetic schema needs an inverse pair")
        if not any(r.parents for r in rels):
            raise ConfigError("synthetic schema needs a parent/child pair")
        if not any(r.disjoint_with for r in rels):
            raise ConfigError("synthetic schema needs a disjoint pair")


def _relation_vectors(schema: RelationSchema, dim: int, rng) -> dict[str, np.ndarray]:
    order = {r.name: i for i, r in enumerate(schema)}
    base = {r.name: rng.normal(0.0, 1.0, dim) for r in schema}
    vec: dict[str, np.ndarray] = {}

    def get(name, depth=0):
        if name in vec:
            return vec[name]
        r = schema[name]
        if r.symmetric:
            v = np.zeros(dim)
        elif r.parents:
            v = get(min(r.parents, key=order.__getitem__), depth + 1)
        elif r.inverse_of and order[r.inverse_of] < order[name] and depth < len(order):
            v = -get(r.inverse_of, depth + 1)
        else:
            v = base[name]
        vec[name] = v
        return v

    for r in schema:
        get(r.name)
    return vec


def _pair_ok(h, t, symmetric):
    return (h < t) if symmetric else (h != t)


def planted_pairs(latent_h, latent_t, v, m, symmetric, same_type, excluded=frozenset()):
    """Top ``m`` pairs ``(i, j)`` by ``-||latent_h[i] + v - latent_t[j]||``.

    Ties are broken by position (row-major).  Self-loops are skipped for
    same-type relations; symmetric relations only keep ``i < j``.
    Scores are computed in row chunks, keeping each chunk's best pairs.
    """
    if m <= 0:
        return []
    want = m + len(excluded)
    n_h, n_t = len(latent_h), len(latent_t)
    rows = max(1, 4_000_000 // max(1, n_t * latent_h.shape[1]))
    keep_s, keep_i = [], []
    for start in range(0, n_h, rows):
        blk = latent_h[start:start + rows]
        diff = blk[:, None, :] + v[None, None, :] - latent_t[None, :, :]
        score = -np.sqrt((diff * diff).sum(axis=2))
        if same_type:
            ii = np.arange(start, start + len(blk))[:, None]
            jj = np.arange(n_t)[None, :]
            score[(ii >= jj) if symmetric else (ii == jj)] = -np.inf
        flat = score.reshape(-1)
        idx = np.arange(flat.size)
        if flat.size > want:
            idx = np.argpartition(-flat, want - 1)[:want]
            # keep every pair tied with the cut-off so position tie-breaks stay exact
            cut = flat[idx].min()
            idx = np.flatnonzero(flat >= cut)
        keep_s.append(flat[idx])
        keep_i.append(idx + start * n_t)
    scores = np.concatenate(keep_s)
    flat_idx = np.concatenate(keep_i)
    order = np.lexsort((flat_idx, -scores))
    out = []
    for k in order:
        if len(out) == m or scores[k] == -np.inf:
            break
        pair = divmod(int(flat_idx[k]), n_t)
        if pair not in excluded:
            out.append(pair)
    return out


def _noise_pairs(n_h, n_t, m, symmetric, same_type, taken, rng):
    out = []
    taken = set(taken)
    total = n_h * n_t
    if same_type:
        total = n_h * (n_h - 1) // 2 if symmetric else n_h * (n_h - 1)
    if len(taken) + m > total:
        raise ConfigError("infeasible spec: more edges requested than typed pairs available")
    while len(out) < m:
        k = max(16, 2 * (m - len(out)))
        hs = rng.integers(0, n_h, k)
        ts = rng.integers(0, n_t, k)
        for h, t in zip(hs.tolist(), ts.tolist()):
            if same_type and symmetric and h > t:
                h, t = t, h
            if same_type and not _pair_ok(h, t, symmetric):
                continue
            if (h, t) in taken:
                continue
            taken.add((h, t))
            out.append((h, t))
            if len(out) == m:
                break
    return out


@dataclass
class SyntheticCorpus:
    schema: RelationSchema
    lines: list[str]
    planted: dict[str, list[tuple[int, int]]]
    noise: dict[str, list[tuple[int, int]]]
    negatives: list[str]


def synthesize(spec: SyntheticSpec) -> SyntheticCorpus:
    """Build the corpus in memory (see :func:`generate_synthetic`)."""
    schema = spec.schema()
    _check(spec, schema)
    counts = spec.counts()
    rng = rngmod.stream(spec.seed, "synthetic", "latent")
    latent = {nt: rng.normal(0.0, 1.0, (spec.entity_counts[nt], spec.planted_dim)) for nt in schema.node_types}
    vectors = _relation_vectors(schema, spec.planted_dim, rng)
    sources = sorted(spec.thresholds) or ["src"]

    used: dict[str, set] = {}
    planted: dict[str, list] = {}
    noise: dict[str, list] = {}
    lines = []
    for r in schema:
        m = counts[r.name]
        n_noise = int(round(spec.noise * m))
        same = r.domain == r.range
        excluded = set()
        for d in r.disjoint_with:
            excluded |= used.get(d, set())
        if r.symmetric:
            excluded |= {(j, i) for i, j in excluded}
        stream = rngmod.stream(spec.seed, "synthetic", "edges", r.name)
        planted[r.name] = planted_pairs(latent[r.domain], latent[r.range], vectors[r.name],
                                        m - n_noise, r.symmetric, same, excluded)
        if len(planted[r.name]) < m - n_noise:
            raise ConfigError(f"infeasible spec: relation {r.name} cannot hold {m} edges")
        noise[r.name] = _noise_pairs(spec.entity_counts[r.domain], spec.entity_counts[r.range], n_noise,
                                     r.symmetric, same, excluded | set(planted[r.name]), stream)
        used[r.name] = set(planted[r.name]) | set(noise[r.name])
        for kind, pairs in (("planted", planted[r.name]), ("noise", noise[r.name])):
            lo, hi = (0.6, 1.0) if kind == "planted" else (0.0, 0.8)
            qual = stream.uniform(lo, hi, len(pairs))
            src = stream.integers(0, len(sources), len(pairs))
            day = stream.integers(0, spec.days, len(pairs))
            for (i, j), q, s, dd in zip(pairs, qual, src, day):
                date = (spec.start_date + dt.timedelta(days=int(dd))).isoformat()
                lines.append(f"{r.domain}:{i}\t{r.name}\t{r.range}:{j}\t{q:.3f}\t{sources[s]}\t{date}\t+")

    negatives = []
    if spec.source_negatives:
        stream = rngmod.stream(spec.seed, "synthetic", "negatives")
        rels = list(schema)
        present = {(line.split("\t")[0], line.split("\t")[1], line.split("\t")[2]) for line in lines}
        attempts = 0
        while len(negatives) < spec.source_negatives and attempts < 100 * spec.source_negatives:
            attempts += 1
            r = rels[int(stream.integers(0, len(rels)))]
            i = int(stream.integers(0, spec.entity_counts[r.domain]))
            j = int(stream.integers(0, spec.entity_counts[r.range]))
            key = (f"{r.domain}:{i}", r.name, f"{r.range}:{j}")
            if (r.domain == r.range and i == j) or key in present:
                continue
            present.add(key)
            negatives.append(f"{key[0]}\t{r.name}\t{key[2]}\t-\t{sources[0]}\t-\t-")

    order = rngmod.stream(spec.seed, "synthetic", "order").permutation(len(lines))
    lines = [lines[k] for k in order]
    return SyntheticCorpus(schema, lines, planted, noise, negatives)


def generate_synthetic(spec: SyntheticSpec, out_dir) -> dict[str, str]:
    """Write ``edges.tsv``, ``schema.tsv`` and ``thresholds.tsv`` to ``out_dir``.

    Raises :class:`ConfigError` when the spec asks for more edges than a
    relation has typed pairs.
    """
    corpus = synthesize(spec)
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, f"{name}.tsv") for name in ("edges", "schema", "thresholds")}
    with open(paths["edges"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# head\trelation\ttail\tquality\tsource\tdate\tpolarity\n")
        fh.write("".join(line + "\n" for line in corpus.lines + corpus.negatives))
    write_schema(corpus.schema, paths["schema"])
    with open(paths["thresholds"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# source\thigh\tmedium\tlow\n")
        for source in sorted(spec.thresholds):
            fh.write(source + "\t" + "\t".join(repr(float(x)) for x in spec.thresholds[source]) + "\n")
    return paths

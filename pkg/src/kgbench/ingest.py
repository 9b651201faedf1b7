"""Edge-file parsing, filtering, directionality variants and graph assembly.

Edge files are UTF-8, tab separated, one edge per line::

    head(TYPE:id)  relation  tail(TYPE:id)  quality|-  source  [date|-]  [+|-]

Lines starting with ``#`` and blank lines are skipped.  Quality scores
must already be normalised to ``[0, 1]``.
"""

from __future__ import annotations

import datetime as dt
import functools
import gc
import io
import itertools
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import DataError
from .graph import EntityId, Graph, Polarity, Triple, Vocabulary, canonical_form
from .schema import EMPTY, RelationSchema

LEVELS = ("high", "medium", "low", "all")
INFERRED_SOURCE = "inferred"


@dataclass
class IngestReport:
    lines_read: int = 0
    parsed: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)
    dropped: Counter = field(default_factory=Counter)
    unscored: int = 0
    unknown_exclusions: list[str] = field(default_factory=list)
    duplicates_merged: int = 0
    true_negatives_inferred: int = 0
    conflicts: list[str] = field(default_factory=list)
    rejected: list[str] = field(default_factory=list)

    def rows(self):
        yield "lines_read", self.lines_read
        yield "triples_parsed", self.parsed
        yield "parse_errors", len(self.errors)
        for key in sorted(self.dropped):
            yield f"dropped.{key}", self.dropped[key]
        yield "unscored_kept", self.unscored
        yield "duplicates_merged", self.duplicates_merged
        yield "true_negatives_inferred", self.true_negatives_inferred
        yield "conflicts", len(self.conflicts)
        yield "rejected", len(self.rejected)
        for name in self.unknown_exclusions:
            yield "unknown_exclusion", name
        for lineno, reason in self.errors:
            yield f"error.line{lineno}", reason
        for c in self.conflicts:
            yield "conflict", c


def _parse_line(cols, vocab: Vocabulary, schema: RelationSchema) -> Triple:
    if not 5 <= len(cols) <= 7:
        raise ValueError(f"expected 5 to 7 columns, got {len(cols)}")
    head_s, rel, tail_s, qual_s, source = cols[:5]
    date_s = cols[5] if len(cols) > 5 else EMPTY
    pol_s = cols[6] if len(cols) > 6 else "+"
    if rel not in schema:
        raise ValueError(f"unknown relation {rel!r}")
    if not source or source == EMPTY:
        raise ValueError("missing source label")
    if qual_s == EMPTY:
        quality = None
    else:
        quality = float(qual_s)
        if not 0.0 <= quality <= 1.0:
            raise ValueError(f"quality {qual_s} outside [0, 1]")
    timestamp = None if date_s in (EMPTY, "") else dt.date.fromisoformat(date_s)
    if pol_s not in ("+", "-"):
        raise ValueError(f"polarity must be '+' or '-', got {pol_s!r}")
    head = vocab.parse(head_s)
    tail = vocab.parse(tail_s)
    r = schema[rel]
    if head.node_type != r.domain or tail.node_type != r.range:
        raise ValueError(
            f"{rel} expects {r.domain} -> {r.range}, got {head.node_type} -> {tail.node_type}"
        )
    return Triple(head, rel, tail, Polarity(pol_s), quality, source, timestamp)


def _gc_paused(fn):
    """Run ``fn`` with the cyclic collector off.

    Ingest allocates millions of acyclic tuples; left on, the collector
    rescans them repeatedly and doubles the wall time on large inputs.
    """

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        enabled = gc.isenabled()
        gc.disable()
        try:
            return fn(*args, **kwargs)
        finally:
            if enabled:
                gc.enable()

    return wrapper


@_gc_paused
def parse_edges(stream, schema: RelationSchema, vocab: Vocabulary | None = None, path=None):
    """Parse an edge file into raw triples.

    ``stream`` may be a binary or text file object, or any iterable of
    lines.  Malformed lines are recorded in the report and skipped.
    Entities are interned into ``vocab`` (a fresh one by default), so two
    files parsed with the same vocabulary share entity indices.

    Returns
    -------
    (list of Triple, IngestReport)
    """
    vocab = Vocabulary() if vocab is None else vocab
    report = IngestReport()
    triples = []
    try:
        for lineno, raw in enumerate(stream, start=1):
            if isinstance(raw, bytes):
                try:
                    raw = raw.decode("utf-8")
                except UnicodeDecodeError:
                    report.lines_read += 1
                    report.errors.append((lineno, "invalid UTF-8"))
                    continue
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            report.lines_read += 1
            try:
                triples.append(_parse_line(line.split("\t"), vocab, schema))
            except ValueError as exc:
                report.errors.append((lineno, str(exc)))
    except OSError as exc:
        raise DataError(f"cannot read edges: {exc}", path) from None
    report.parsed = len(triples)
    return triples, report


def read_edges(path, schema: RelationSchema, vocab: Vocabulary | None = None):
    path = os.fspath(path)
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise DataError(f"cannot read edges: {exc.strerror}", path) from None
    with fh:
        return parse_edges(fh, schema, vocab, path)


def format_edge(t: Triple) -> str:
    quality = EMPTY if t.quality is None else repr(float(t.quality))
    date = EMPTY if t.timestamp is None else t.timestamp.isoformat()
    return f"{t.head}\t{t.relation}\t{t.tail}\t{quality}\t{t.source}\t{date}\t{t.polarity.value}\n"


def write_edges(triples: Iterable[Triple], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# head\trelation\ttail\tquality\tsource\tdate\tpolarity\n")
        buf = io.StringIO()
        for t in triples:
            buf.write(format_edge(t))
        fh.write(buf.getvalue())


@dataclass(frozen=True)
class QualitySetting:
    """A quality level plus per-source ``(high, medium, low)`` cutoffs."""

    level: str
    thresholds: Mapping[str, tuple[float, float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"quality level must be one of {LEVELS}, got {self.level!r}")
        for source, cut in self.thresholds.items():
            if len(cut) != 3:
                raise ValueError(f"source {source!r} needs high/medium/low cutoffs")
            high, medium, low = cut
            if not all(0.0 <= c <= 1.0 for c in cut):
                raise ValueError(f"cutoffs for {source!r} must lie in [0, 1]")
            if not high >= medium >= low:
                raise ValueError(f"cutoffs for {source!r} must satisfy high >= medium >= low")

    def cutoff(self, source: str) -> float:
        if self.level == "all":
            return -math.inf
        try:
            return self.thresholds[source][LEVELS.index(self.level)]
        except KeyError:
            raise DataError(f"source {source!r} missing from quality thresholds") from None


def read_thresholds(path) -> dict[str, tuple[float, float, float]]:
    """Read a ``source  high  medium  low`` file."""
    path = os.fspath(path)
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read thresholds: {exc.strerror}", path) from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise DataError(f"expected 4 columns, got {len(cols)}", path, lineno)
            try:
                cut = tuple(float(c) for c in cols[1:])
                QualitySetting("all", {cols[0]: cut})
            except ValueError as exc:
                raise DataError(str(exc), path, lineno) from None
            out[cols[0]] = cut
    return out


def apply_quality_filter(triples: Iterable[Triple], setting: QualitySetting):
    """Keep triples meeting their source's cutoff at ``setting.level``.

    Unscored triples are always kept and counted under ``"unscored"``;
    dropped triples are counted under ``"quality:<source>"``.
    """
    counts: Counter = Counter()
    kept = []
    for t in triples:
        if t.quality is None:
            counts["unscored"] += 1
            kept.append(t)
        elif setting.level == "all" or t.quality >= setting.cutoff(t.source):
            kept.append(t)
        else:
            counts[f"quality:{t.source}"] += 1
    return kept, counts


def filter_sources_and_relations(triples: Iterable[Triple], excluded_sources=(), excluded_relations=()):
    """Drop triples whose source or relation is excluded.

    Returns the kept triples, drop counts and the excluded names that
    matched nothing.
    """
    sources, relations = set(excluded_sources), set(excluded_relations)
    counts: Counter = Counter()
    kept = []
    hit = set()
    for t in triples:
        if t.source in sources:
            counts[f"source:{t.source}"] += 1
            hit.add(("s", t.source))
        elif t.relation in relations:
            counts[f"relation:{t.relation}"] += 1
            hit.add(("r", t.relation))
        else:
            kept.append(t)
    unknown = sorted(f"source:{s}" for s in sources if ("s", s) not in hit)
    unknown += sorted(f"relation:{r}" for r in relations if ("r", r) not in hit)
    return kept, counts, unknown


def _merge(old: Triple, t: Triple) -> Triple:
    """Combine two records of one key: max quality, smallest source, earliest date."""
    quality = old.quality
    if t.quality is not None and (quality is None or t.quality > quality):
        quality = t.quality
    stamps = [s for s in (old.timestamp, t.timestamp) if s is not None]
    return old._replace(
        quality=quality,
        source=min(old.source, t.source),
        timestamp=min(stamps) if stamps else None,
    )


def dedupe(triples: Iterable[Triple]) -> tuple[list[Triple], int]:
    """Merge duplicate keys: max quality, smallest source, earliest date."""
    store: dict = {}
    merged = 0
    for t in triples:
        key = t[:4]
        old = store.setdefault(key, t)
        if old is not t:
            store[key] = _merge(old, t)
            merged += 1
    return list(store.values()), merged


def _symmetric_pass(unique: list[Triple], schema: RelationSchema, directed: bool) -> list[Triple]:
    """Directionality on already-deduplicated triples.

    Only symmetric relations can produce new collisions, so only their
    triples are hashed; everything else passes through in place.
    """
    sym = {r.name for r in schema if r.symmetric}
    if not sym:
        return list(unique)
    out: list[Triple] = []
    slot: dict = {}

    def put(t):
        i = slot.setdefault(t[:4], len(out))
        if i == len(out):
            out.append(t)
        else:
            out[i] = _merge(out[i], t)

    for t in unique:
        if t.relation not in sym:
            out.append(t)
        elif directed:
            put(t)
            if t.head != t.tail:
                put(t._replace(head=t.tail, tail=t.head))
        else:
            put(t._replace(head=t.tail, tail=t.head) if t.head.index > t.tail.index else t)
    return out


def make_undirected(triples: Iterable[Triple], schema: RelationSchema) -> list[Triple]:
    """Canonical orientation for symmetric relations, duplicates merged."""
    return _symmetric_pass(dedupe(triples)[0], schema, directed=False)


def make_directed(triples: Iterable[Triple], schema: RelationSchema) -> list[Triple]:
    """Both orientations for symmetric relations, duplicates merged."""
    return _symmetric_pass(dedupe(triples)[0], schema, directed=True)


def infer_true_negatives(triples: Iterable[Triple], schema: RelationSchema):
    """Derive negatives from disjoint relation pairs.

    Each positive ``(h, r, t)`` yields ``(h, s, t)`` as a negative for
    every ``s`` disjoint with ``r``, unless that triple is itself a
    positive, which is recorded as a conflict instead.

    Returns
    -------
    (list of negative Triple, list of conflict descriptions)
    """
    positives = [t for t in triples if t.polarity == Polarity.POSITIVE]
    disjoint = {r.name: sorted(r.disjoint_with) for r in schema if r.disjoint_with}
    for name in {t.relation for t in positives} - set(schema.names):
        schema[name]
    if not disjoint:
        return [], []
    present = {t[:3] for t in positives if t.relation in disjoint}
    out: dict = {}
    conflicts = {}
    neg_pol = Polarity.NEGATIVE
    for t in positives:
        for s in disjoint.get(t.relation, ()):
            if (t.head, s, t.tail) in present:
                pair = tuple(sorted((t.relation, s)))
                conflicts.setdefault((t.head, t.tail, pair), f"{t.head}\t{pair[0]}/{pair[1]}\t{t.tail}")
                continue
            key = (t.head, s, t.tail, neg_pol)
            if key not in out:
                out[key] = Triple(t.head, s, t.tail, neg_pol, None, INFERRED_SOURCE, t.timestamp)
    return list(out.values()), list(conflicts.values())


def assemble_graph(triples: Iterable[Triple], negatives: Iterable[Triple], schema: RelationSchema):
    """Merge duplicates, resolve polarity conflicts and build a :class:`Graph`.

    ``triples`` may mix polarities; ``negatives`` holds extra negatives
    (typically the inferred ones).  Entities are re-interned densely in
    the order of their original intern index so that canonical forms are
    preserved.
    """
    report = IngestReport()
    pos_store: dict = {}
    neg_store: dict = {}
    typing = {r.name: (r.domain, r.range) for r in schema}
    merged = 0
    for t in itertools.chain(triples, negatives):
        dr = typing.get(t.relation)
        if dr is None or t.head.node_type != dr[0] or t.tail.node_type != dr[1]:
            report.rejected.append(f"{t}\tdomain/range violation")
            continue
        store = pos_store if t.polarity == Polarity.POSITIVE else neg_store
        key = t[:4]
        old = store.setdefault(key, t)
        if old is not t:
            store[key] = _merge(old, t)
            merged += 1
    report.duplicates_merged += merged
    positives = list(pos_store.values())
    present = {t[:3] for t in positives}
    kept_neg = []
    for t in neg_store.values():
        if t[:3] in present:
            report.conflicts.append(f"{t}\tpositive and negative")
        else:
            kept_neg.append(t)

    seen: dict[EntityId, int] = {}
    for t in positives + kept_neg:
        for e in (t.head, t.tail):
            if e not in seen:
                seen[e] = e.index if e.index >= 0 else len(seen) + (1 << 62)
    order = sorted(seen, key=seen.__getitem__)
    entities = [e if e.index == i else EntityId(e.node_type, e.local_id, i) for i, e in enumerate(order)]
    if all(e is o for e, o in zip(entities, order)):
        return Graph(schema, entities, positives, kept_neg), report
    remap = dict(zip(order, entities))

    def rebind(t):
        return t._replace(head=remap[t.head], tail=remap[t.tail])

    graph = Graph(schema, entities, [rebind(t) for t in positives], [rebind(t) for t in kept_neg])
    return graph, report


@dataclass
class GraphOptions:
    quality: str = "all"
    thresholds: Mapping[str, tuple[float, float, float]] = field(default_factory=dict)
    directed: bool = False
    excluded_sources: frozenset = frozenset()
    excluded_relations: frozenset = frozenset()


@_gc_paused
def build_graph(raw: list[Triple], schema: RelationSchema, options: GraphOptions, report: IngestReport | None = None):
    """Run the full creation chain on parsed triples.

    filter -> quality -> directionality -> disjointness negatives -> assembly.
    """
    report = IngestReport() if report is None else report
    kept, counts, unknown = filter_sources_and_relations(raw, options.excluded_sources, options.excluded_relations)
    report.dropped.update(counts)
    report.unknown_exclusions.extend(unknown)
    kept, counts = apply_quality_filter(kept, QualitySetting(options.quality, options.thresholds))
    report.unscored += counts.pop("unscored", 0)
    report.dropped.update(counts)
    positives = [t for t in kept if t.polarity == Polarity.POSITIVE]
    source_neg = [t for t in kept if t.polarity == Polarity.NEGATIVE]
    positives, merged = dedupe(positives)
    report.duplicates_merged += merged
    positives = _symmetric_pass(positives, schema, options.directed)
    inferred, conflicts = infer_true_negatives(positives, schema)
    report.true_negatives_inferred = len(inferred)
    report.conflicts.extend(conflicts)
    graph, asm = assemble_graph(positives + source_neg, inferred, schema)
    report.duplicates_merged += asm.duplicates_merged
    report.conflicts.extend(asm.conflicts)
    report.rejected.extend(asm.rejected)
    return graph, report


def save_graph(g: Graph, directory, report: IngestReport | None = None) -> None:
    """Write ``entities.tsv``, ``edges.tsv``, ``schema.tsv`` and ``stats.tsv``.

    ``entities.tsv`` pins the intern order so :func:`load_graph`
    rebuilds an identical graph.
    """
    from .graph import graph_stats
    from .schema import write_schema

    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "entities.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(f"{e}\n" for e in g.entities))
    write_edges(list(g.positives) + list(g.negatives), os.path.join(directory, "edges.tsv"))
    write_schema(g.schema, os.path.join(directory, "schema.tsv"))
    with open(os.path.join(directory, "stats.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(f"{k}\t{v}\n" for k, v in graph_stats(g).rows()))
    if report is not None:
        with open(os.path.join(directory, "ingest_report.tsv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(f"{k}\t{v}\n" for k, v in report.rows()))


def load_graph(directory) -> Graph:
    from .schema import read_schema

    schema = read_schema(os.path.join(directory, "schema.tsv"))
    vocab = Vocabulary()
    path = os.path.join(directory, "entities.tsv")
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                try:
                    vocab.parse(line.rstrip("\r\n"))
                except ValueError as exc:
                    raise DataError(str(exc), path, lineno) from None
    except OSError as exc:
        raise DataError(f"cannot read: {exc.strerror}", path) from None
    edges_path = os.path.join(directory, "edges.tsv")
    triples, report = read_edges(edges_path, schema, vocab)
    if report.errors:
        lineno, reason = report.errors[0]
        raise DataError(reason, edges_path, lineno)
    graph, _ = assemble_graph(triples, [], schema)
    return graph

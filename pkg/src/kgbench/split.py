"""Leakage-free train/valid/test splits with true and typed-sampled negatives."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, DataError
from .graph import EntityId, Graph, KeyIndex, Polarity, Triple
from .ingest import assemble_graph

PARTS = ("train", "valid", "test")
REASONS = ("unseen_entity", "reverse_symmetric", "inverse", "super_relation")


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "random"
    ratios: tuple[float, float, float] = (0.9, 0.05, 0.05)
    negative_ratio: float = 1.0
    seed: int = 0
    max_corruption_attempts: int = 100

    def __post_init__(self):
        if self.mode not in ("random", "time_slice"):
            raise ConfigError(f"split mode must be 'random' or 'time_slice', got {self.mode!r}")
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise ConfigError("ratios must be three non-negative numbers")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"ratios must sum to 1, got {sum(self.ratios)!r}")
        if not self.negative_ratio > 0:
            raise ConfigError("negative_ratio must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.max_corruption_attempts < 1:
            raise ConfigError("max_corruption_attempts must be positive")


@dataclass
class SplitReport:
    moved: dict[str, int] = field(default_factory=lambda: dict.fromkeys(REASONS, 0))
    dropped: dict[str, int] = field(default_factory=lambda: dict.fromkeys(REASONS, 0))
    repair_iterations: int = 0
    true_negatives: dict[str, int] = field(default_factory=lambda: dict.fromkeys(PARTS, 0))
    sampled_negatives: dict[str, int] = field(default_factory=lambda: dict.fromkeys(PARTS, 0))
    skipped_positives: dict[str, int] = field(default_factory=lambda: dict.fromkeys(PARTS, 0))
    sizes: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def rows(self):
        for part in PARTS:
            yield f"size.{part}", self.sizes.get(part, 0)
            yield f"size.{part}_neg", self.sizes.get(part + "_neg", 0)
        for reason in REASONS:
            yield f"moved_to_train.{reason}", self.moved[reason]
        for reason in REASONS:
            yield f"dropped.{reason}", self.dropped[reason]
        yield "repair_iterations", self.repair_iterations
        for part in PARTS:
            yield f"negatives.true.{part}", self.true_negatives[part]
            yield f"negatives.sampled.{part}", self.sampled_negatives[part]
            yield f"negatives.skipped_positives.{part}", self.skipped_positives[part]
        for w in self.warnings:
            yield "warning", w


@dataclass
class Split:
    """Positive and negative parts as ``(n, 3)`` arrays of graph indices."""

    graph: Graph
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    train_neg: np.ndarray
    valid_neg: np.ndarray
    test_neg: np.ndarray
    report: SplitReport = field(default_factory=SplitReport)

    def part(self, name: str) -> np.ndarray:
        if name not in PARTS and name.removesuffix("_neg") not in PARTS:
            raise KeyError(name)
        return getattr(self, name)

    def triples(self, name: str) -> list[Triple]:
        polarity = Polarity.NEGATIVE if name.endswith("_neg") else Polarity.POSITIVE
        return self.graph.ids_to_triples(self.part(name), polarity)

    def known_positives(self) -> KeyIndex:
        """Index over train, valid and test positives (the filter set)."""
        g = self.graph
        ids = np.concatenate([self.train, self.valid, self.test])
        return KeyIndex(ids, g.pos_index.n_ent, g.pos_index.n_rel)

    def train_index(self) -> KeyIndex:
        g = self.graph
        return KeyIndex(self.train, g.pos_index.n_ent, g.pos_index.n_rel)


def inference_codes(ids: np.ndarray, train: KeyIndex, schema) -> np.ndarray:
    """Vectorised trivial-inferability check.

    Returns one code per row: 0 none, 1 reverse symmetric, 2 inverse,
    3 super-relation, with the same precedence as
    :func:`kgbench.graph.is_trivially_inferable`.
    """
    ids = np.asarray(ids, dtype=np.int64).reshape(-1, 3)
    h, r, t = ids[:, 0], ids[:, 1], ids[:, 2]
    codes = np.zeros(len(ids), dtype=np.int8)
    if len(ids) == 0 or len(train) == 0:
        return codes
    for ri, rel in enumerate(schema):
        rows = np.flatnonzero(r == ri)
        if len(rows) == 0:
            continue
        hh, tt = h[rows], t[rows]
        code = np.zeros(len(rows), dtype=np.int8)
        # fill in reverse precedence so earlier rules overwrite later ones
        for child in schema.descendants(rel.name):
            hit = train.contains(hh, schema.index(child), tt)
            code[hit] = 3
        if rel.inverse_of is not None:
            code[train.contains(tt, schema.index(rel.inverse_of), hh)] = 2
        if rel.symmetric:
            code[train.contains(tt, ri, hh)] = 1
        codes[rows] = code
    return codes


def _entity_mask(ids: np.ndarray, n_ent: int) -> np.ndarray:
    mask = np.zeros(n_ent, dtype=bool)
    mask[ids[:, 0]] = True
    mask[ids[:, 2]] = True
    return mask


def random_split(g: Graph, spec: SplitSpec) -> Split:
    """Shuffle positives into parts, then repair to a leakage-free fixpoint.

    Valid/test triples touching an entity absent from train, or trivially
    inferable from train, are moved to train until nothing moves.
    """
    if len(g.pos_ids) == 0:
        raise DataError("cannot split an empty graph")
    report = SplitReport()
    if spec.ratios[2] == 0:
        report.warnings.append("test ratio is 0: the split has no test set")
    n = len(g.pos_ids)
    perm = rngmod.stream(spec.seed, "random_split", "shuffle").permutation(n)
    n_valid = math.floor(spec.ratios[1] * n)
    n_test = math.floor(spec.ratios[2] * n)
    n_train = n - n_valid - n_test
    label = np.empty(n, dtype=np.int8)
    label[perm[:n_train]] = 0
    label[perm[n_train:n_train + n_valid]] = 1
    label[perm[n_train + n_valid:]] = 2

    ids = g.pos_ids
    n_ent, n_rel = g.pos_index.n_ent, g.pos_index.n_rel
    train_size = int((label == 0).sum())
    while True:
        report.repair_iterations += 1
        moved = 0
        held = np.flatnonzero(label != 0)
        covered = _entity_mask(ids[label == 0], n_ent)
        unseen = held[~(covered[ids[held, 0]] & covered[ids[held, 2]])]
        label[unseen] = 0
        report.moved["unseen_entity"] += len(unseen)
        moved += len(unseen)

        held = np.flatnonzero(label != 0)
        codes = inference_codes(ids[held], KeyIndex(ids[label == 0], n_ent, n_rel), g.schema)
        for code in (1, 2, 3):
            report.moved[REASONS[code]] += int((codes == code).sum())
        label[held[codes > 0]] = 0
        moved += int((codes > 0).sum())

        new_size = int((label == 0).sum())
        assert new_size >= train_size
        train_size = new_size
        if moved == 0:
            break

    parts = {name: ids[label == k] for k, name in enumerate(PARTS)}
    return _finish(g, parts, spec, report)


def _rebase(g: Graph, offset_of) -> list[Triple]:
    def rebind(e):
        return EntityId(e.node_type, e.local_id, offset_of(e))

    return [t._replace(head=rebind(t.head), tail=rebind(t.tail)) for t in g.positives + g.negatives]


def time_slice_split(g_old: Graph, g_new: Graph, spec: SplitSpec) -> Split:
    """Train on the old snapshot; valid/test are edges new in the later one.

    New edges touching an entity unseen in train, or trivially inferable
    from train, are dropped (train is fixed history).  The returned
    split refers to a merged graph holding both snapshots, with the old
    snapshot's entities first.
    """
    if len(g_old.pos_ids) == 0:
        raise DataError("cannot time-slice from an empty old graph")
    if g_old.schema.relations != g_new.schema.relations:
        raise DataError("old and new graphs use different schemas")
    report = SplitReport()
    if spec.ratios[2] == 0:
        report.warnings.append("test ratio is 0: the split has no test set")
    n_old = g_old.n_entities
    raw = _rebase(g_old, lambda e: e.index)
    raw += _rebase(g_new, lambda e: g_old.entity_index(e) if g_old.entity_index(e) >= 0 else n_old + e.index)
    merged, _ = assemble_graph(raw, [], g_old.schema)

    n_ent, n_rel = merged.pos_index.n_ent, merged.pos_index.n_rel
    train = merged.triples_to_ids(g_old.positives)
    train = train[np.argsort(_graph_order(merged, train), kind="stable")]
    new_ids = merged.triples_to_ids(g_new.positives)
    old_index = KeyIndex(train, n_ent, n_rel)
    cand = new_ids[~old_index.contains(new_ids[:, 0], new_ids[:, 1], new_ids[:, 2])]

    covered = _entity_mask(train, n_ent)
    seen = covered[cand[:, 0]] & covered[cand[:, 2]]
    report.dropped["unseen_entity"] = int((~seen).sum())
    cand = cand[seen]
    codes = inference_codes(cand, old_index, merged.schema)
    for code in (1, 2, 3):
        report.dropped[REASONS[code]] = int((codes == code).sum())
    cand = cand[codes == 0]
    cand = cand[np.argsort(_graph_order(merged, cand), kind="stable")]

    perm = rngmod.stream(spec.seed, "time_slice_split", "shuffle").permutation(len(cand))
    rv, rt = spec.ratios[1], spec.ratios[2]
    n_valid = math.floor(len(cand) * rv / (rv + rt)) if rv + rt > 0 else 0
    valid = cand[np.sort(perm[:n_valid])]
    test = cand[np.sort(perm[n_valid:])]
    return _finish(merged, {"train": train, "valid": valid, "test": test}, spec, report)


def _graph_order(g: Graph, ids: np.ndarray) -> np.ndarray:
    """Position of each row of ``ids`` among the graph's positives."""
    keys = g.pos_index.encode(g.pos_ids[:, 0], g.pos_ids[:, 1], g.pos_ids[:, 2])
    order = np.argsort(keys)
    q = g.pos_index.encode(ids[:, 0], ids[:, 1], ids[:, 2])
    return order[np.searchsorted(keys[order], q)]


def _finish(g: Graph, parts: dict, spec: SplitSpec, report: SplitReport) -> Split:
    negs = sample_negatives(parts, g, spec, report)
    for name in PARTS:
        report.sizes[name] = len(parts[name])
        report.sizes[name + "_neg"] = len(negs[name])
    return Split(
        graph=g,
        train=parts["train"],
        valid=parts["valid"],
        test=parts["test"],
        train_neg=negs["train"],
        valid_neg=negs["valid"],
        test_neg=negs["test"],
        report=report,
    )


class TypedCorruptor:
    """Replaces the head or tail of triples with an entity of the right type.

    Candidates equal to a triple in ``known`` are rejected and redrawn,
    up to ``max_attempts`` draws per triple.
    """

    def __init__(self, g: Graph, known: KeyIndex | None = None, max_attempts: int = 100):
        self.known = g.pos_index if known is None else known
        self.max_attempts = max_attempts
        self.dom, self.rng_type = g.domain_range_ids()
        pools = [g.entities_of_type(nt) for nt in g.node_types]
        self.pool_size = np.array([len(p) for p in pools], dtype=np.int64)
        self.pool_offset = np.concatenate([[0], np.cumsum(self.pool_size)[:-1]]).astype(np.int64)
        self.pool = np.concatenate(pools).astype(np.int64) if pools else np.empty(0, np.int64)

    def corrupt(self, ids: np.ndarray, rng: np.random.Generator, forbidden: np.ndarray | None = None, unique: bool = True):
        """Corrupt every row of ``ids`` once.

        Parameters
        ----------
        ids : (n, 3) int array
        rng : numpy Generator
        forbidden : sorted int64 array of extra rejected keys, optional
        unique : if true, accepted corruptions are also distinct from each
            other (earlier rows win).

        Returns
        -------
        out : (n, 3) int array of corrupted triples (rows copied from ``ids``
            where corruption failed)
        ok : bool array, false for skipped rows
        """
        ids = np.asarray(ids, dtype=np.int64).reshape(-1, 3)
        n = len(ids)
        out = ids.copy()
        ok = np.zeros(n, dtype=bool)
        if n == 0:
            return out, ok
        head_side = rng.random(n) < 0.5
        col = np.where(head_side, 0, 2)
        slot_type = np.where(head_side, self.dom[ids[:, 1]], self.rng_type[ids[:, 1]])
        size = self.pool_size[slot_type]
        offset = self.pool_offset[slot_type]
        accepted = np.empty(0, dtype=np.int64)
        active = np.flatnonzero(size > 1)
        enc = self.known.encode
        rows = np.arange(n)
        for _ in range(self.max_attempts):
            if len(active) == 0:
                break
            draw = self.pool[offset[active] + rng.integers(0, size[active])]
            cand = ids[active].copy()
            cand[rows[: len(active)], col[active]] = draw
            keys = enc(cand[:, 0], cand[:, 1], cand[:, 2])
            good = ~self.known.contains_keys(keys)
            if forbidden is not None and len(forbidden):
                good &= ~_isin_sorted(keys, forbidden)
            if unique:
                good &= ~_isin_sorted(keys, accepted)
                first = np.zeros(len(keys), dtype=bool)
                idx = np.flatnonzero(good)
                _, pick = np.unique(keys[idx], return_index=True)
                first[idx[pick]] = True
                good = first
                accepted = np.union1d(accepted, keys[good])
            out[active[good]] = cand[good]
            ok[active[good]] = True
            active = active[~good]
        return out, ok


def _isin_sorted(keys: np.ndarray, sorted_keys: np.ndarray) -> np.ndarray:
    if len(sorted_keys) == 0:
        return np.zeros(len(keys), dtype=bool)
    pos = np.minimum(np.searchsorted(sorted_keys, keys), len(sorted_keys) - 1)
    return sorted_keys[pos] == keys


def true_negative_parts(parts: dict, g: Graph) -> np.ndarray:
    """Part label (0 train, 1 valid, 2 test) for each true negative of ``g``.

    An inferred negative ``(h, s, t)`` goes to the part holding a
    positive ``(h, r, t)`` with ``r`` disjoint from ``s``; when several
    parts hold one, the later part (test over valid over train) wins.
    Negatives with no generating positive come from the source files and
    go to train.
    """
    neg = g.neg_ids
    label = np.zeros(len(neg), dtype=np.int8)
    if len(neg) == 0:
        return label
    n_ent, n_rel = g.pos_index.n_ent, g.pos_index.n_rel
    schema = g.schema
    for k, name in enumerate(PARTS):
        if k == 0 or len(parts[name]) == 0:
            continue
        index = KeyIndex(parts[name], n_ent, n_rel)
        for si, rel in enumerate(schema):
            rows = np.flatnonzero(neg[:, 1] == si)
            for other in rel.disjoint_with:
                hit = index.contains(neg[rows, 0], schema.index(other), neg[rows, 2])
                label[rows[hit]] = k
    return label


def sample_negatives(parts: dict, g: Graph, spec: SplitSpec, report: SplitReport | None = None) -> dict:
    """Attach negatives to each part.

    Each part gets ``ceil(negative_ratio * |part|)`` negatives: its true
    negatives first (all of them are kept), then typed corruptions of
    its positives, visited in a seeded order, until the quota is met.
    Corruptions never equal a graph positive or an earlier negative.
    """
    report = SplitReport() if report is None else report
    corruptor = TypedCorruptor(g, max_attempts=spec.max_corruption_attempts)
    labels = true_negative_parts(parts, g)
    enc = g.pos_index.encode
    neg_keys = enc(g.neg_ids[:, 0], g.neg_ids[:, 1], g.neg_ids[:, 2])
    accepted = np.sort(neg_keys)
    out = {}
    for k, name in enumerate(PARTS):
        pos = parts[name]
        true_neg = g.neg_ids[labels == k]
        report.true_negatives[name] = len(true_neg)
        target = math.ceil(spec.negative_ratio * len(pos)) if len(pos) else 0
        need = max(0, target - len(true_neg))
        sampled = np.empty((0, 3), dtype=np.int64)
        if need:
            rng = rngmod.stream(spec.seed, "sample_negatives", name)
            jobs = np.resize(rng.permutation(len(pos)), need)
            cand, ok = corruptor.corrupt(pos[jobs], rng, forbidden=accepted)
            sampled = cand[ok]
            report.skipped_positives[name] = int((~ok).sum())
            accepted = np.union1d(accepted, enc(sampled[:, 0], sampled[:, 1], sampled[:, 2]))
        report.sampled_negatives[name] = len(sampled)
        out[name] = np.concatenate([true_neg, sampled]).astype(np.int64).reshape(-1, 3)
    return out


def _write_ids(g: Graph, ids: np.ndarray, path) -> None:
    ents, names = g.entities, g.schema.names
    lines = [f"{ents[h]}\t{names[r]}\t{ents[t]}\n" for h, r, t in ids.tolist()]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(lines))


def write_split(split: Split, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    for name in PARTS:
        _write_ids(split.graph, split.part(name), os.path.join(directory, f"{name}.tsv"))
        _write_ids(split.graph, split.part(name + "_neg"), os.path.join(directory, f"{name}_neg.tsv"))
    with open(os.path.join(directory, "split_report.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        for key, value in split.report.rows():
            fh.write(f"{key}\t{value}\n")


def read_triple_file(path, g: Graph) -> np.ndarray:
    path = os.fspath(path)
    by_name = {str(e): e.index for e in g.entities}
    rows = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read: {exc.strerror}", path) from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise DataError(f"expected 3 columns, got {len(cols)}", path, lineno)
            h, r, t = cols
            if h not in by_name or t not in by_name or r not in g.schema:
                raise DataError(f"triple {line!r} does not belong to the graph", path, lineno)
            rows.append((by_name[h], g.schema.index(r), by_name[t]))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def read_split(directory, g: Graph) -> Split:
    """Load split files written by :func:`write_split` against graph ``g``."""
    arrays = {}
    for name in PARTS:
        arrays[name] = read_triple_file(os.path.join(directory, f"{name}.tsv"), g)
        arrays[name + "_neg"] = read_triple_file(os.path.join(directory, f"{name}_neg.tsv"), g)
    report = SplitReport(sizes={k: len(v) for k, v in arrays.items()})
    return Split(graph=g, report=report, **arrays)

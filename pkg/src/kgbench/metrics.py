"""Ranking and classification metrics over any scorer.

A scorer is any callable mapping an ``(n, 3)`` int array of
``(head, relation, tail)`` graph indices to ``n`` finite scores, higher
meaning more plausible.  It must be deterministic and preserve order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import KGBenchError, RuntimeFailure
from .graph import Graph, KeyIndex, Triple

Scorer = Callable[[np.ndarray], np.ndarray]
DEFAULT_KS = (1, 3, 10)
SIDES = ("head", "tail")


@dataclass(frozen=True)
class RankResult:
    rank: float
    optimistic: int
    pessimistic: int
    n_candidates: int


@dataclass(frozen=True)
class RankRecord:
    triple: tuple[int, int, int]
    head: RankResult
    tail: RankResult

    def side(self, name: str) -> RankResult:
        return self.head if name == "head" else self.tail


def _as_ids(t, g: Graph) -> tuple[int, int, int]:
    if isinstance(t, Triple):
        h, ti = g.entity_index(t.head), g.entity_index(t.tail)
        if h < 0 or ti < 0:
            raise KGBenchError(f"triple {t} is not in the graph vocabulary")
        return h, g.schema.index(t.relation), ti
    h, r, ti = (int(x) for x in t)
    return h, r, ti


def _scores(scorer: Scorer, batch: np.ndarray) -> np.ndarray:
    s = np.asarray(scorer(batch), dtype=np.float64).reshape(-1)
    if len(s) != len(batch):
        raise RuntimeFailure(f"scorer returned {len(s)} scores for {len(batch)} triples")
    if not np.all(np.isfinite(s)):
        raise RuntimeFailure("scorer returned a non-finite score")
    return s


def rank_entity(scorer: Scorer, t, side: str, g: Graph, known: KeyIndex | None = None,
                filtered: bool = True, typed: bool = True) -> RankResult:
    """Rank the true entity of ``t`` against corruptions of one side.

    With ``filtered`` set, candidates whose corrupted triple is in
    ``known`` are removed (the true triple always stays).  Ties count
    half, giving the expected rank under random tie-breaking.
    """
    if side not in SIDES:
        raise ValueError(f"side must be 'head' or 'tail', got {side!r}")
    h, r, ti = _as_ids(t, g)
    rel = g.schema.relations[r]
    col, true_ent = (0, h) if side == "head" else (2, ti)
    node_type = rel.domain if side == "head" else rel.range
    if g.entities[true_ent].node_type != node_type:
        raise KGBenchError(f"entity {g.entities[true_ent]} is not of type {node_type}")
    cand = g.entities_of_type(node_type) if typed else np.arange(g.n_entities)
    batch = np.empty((len(cand), 3), dtype=np.int64)
    batch[:] = (h, r, ti)
    batch[:, col] = cand
    if filtered and known is not None:
        drop = known.contains(batch[:, 0], batch[:, 1], batch[:, 2]) & (cand != true_ent)
        batch = batch[~drop]
        cand = cand[~drop]
    scores = _scores(scorer, batch)
    is_true = cand == true_ent
    true_score = scores[is_true][0]
    others = scores[~is_true]
    greater = int((others > true_score).sum())
    ties = int((others == true_score).sum())
    return RankResult(1 + greater + ties / 2, 1 + greater, 1 + greater + ties, len(cand))


def hits_at_k(ranks: Sequence[float], k: int) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("hits@k of an empty rank list")
    if k < 1:
        raise ValueError("k must be positive")
    return float((ranks <= k).mean())


def mean_reciprocal_rank(ranks: Sequence[float]) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("MRR of an empty rank list")
    if np.any(ranks < 1):
        raise ValueError("ranks must be >= 1")
    return float((1.0 / ranks).mean())


def _labels_scores(labels, scores):
    y = np.asarray(labels).astype(bool).reshape(-1)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if y.shape != s.shape:
        raise ValueError("labels and scores differ in length")
    return y, s


def roc_auc(labels, scores) -> float:
    """Probability a positive outscores a negative, ties counting half.

    Computed from mid-ranks (Mann-Whitney U), which equals the pairwise
    concordance statistic exactly.
    """
    y, s = _labels_scores(labels, scores)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both positives and negatives")
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def pr_auc(labels, scores) -> float:
    """Average precision with tied scores treated as one block.

    Every positive in a block of equal scores is credited with the
    precision measured at the end of that block.
    """
    y, s = _labels_scores(labels, scores)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("PR AUC needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp_end = np.cumsum(y)[ends]
    precision = tp_end / (ends + 1)
    pos_in_block = np.diff(np.r_[0, tp_end])
    return float((pos_in_block * precision).sum() / n_pos)


@dataclass
class EvalReport:
    """Metric values keyed by ``(metric, relation, side)``.

    ``relation`` is ``"ALL"`` or a relation name; ``side`` is ``"ALL"``,
    ``"head"`` or ``"tail"``.
    """

    ks: tuple[int, ...]
    values: dict[tuple[str, str, str], float] = field(default_factory=dict)
    records: list[RankRecord] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def __getitem__(self, key) -> float:
        if isinstance(key, str):
            key = (key, "ALL", "ALL")
        return self.values[key]

    def get(self, metric, relation="ALL", side="ALL", default=None):
        return self.values.get((metric, relation, side), default)

    def rows(self):
        for (metric, rel, side), value in self.values.items():
            yield metric, rel, side, value

    def format(self) -> str:
        lines = ["metric\trelation\tside\tvalue\n"]
        for metric, rel, side, value in self.rows():
            lines.append(f"{metric}\t{rel}\t{side}\t{value!r}\n")
        for flag in self.flags:
            lines.append(f"flag\tALL\tALL\t{flag}\n")
        return "".join(lines)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.format())


def read_report(path) -> dict[tuple[str, str, str], float]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            metric, rel, side, value = line.rstrip("\n").split("\t")
            if metric != "flag":
                out[(metric, rel, side)] = float(value)
    return out


def write_ranks(records: Sequence[RankRecord], g: Graph, path) -> None:
    ents, names = g.entities, g.schema.names
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("head\trelation\ttail\thead_rank\ttail_rank\thead_candidates\ttail_candidates\n")
        for rec in records:
            h, r, t = rec.triple
            fh.write(
                f"{ents[h]}\t{names[r]}\t{ents[t]}\t{rec.head.rank!r}\t{rec.tail.rank!r}"
                f"\t{rec.head.n_candidates}\t{rec.tail.n_candidates}\n"
            )


def worker_count(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("KGBENCH_THREADS", "1") or 1)
    return max(1, int(threads))


def rank_triples(scorer: Scorer, ids: np.ndarray, g: Graph, known: KeyIndex | None,
                 filtered: bool = True, typed: bool = True, threads: int | None = None) -> list[RankRecord]:
    """Head and tail ranks for every row of ``ids``, in input order."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1, 3)

    def one(row):
        row = tuple(int(x) for x in row)
        return RankRecord(
            row,
            rank_entity(scorer, row, "head", g, known, filtered, typed),
            rank_entity(scorer, row, "tail", g, known, filtered, typed),
        )

    n = worker_count(threads)
    if n == 1 or len(ids) < 2:
        return [one(row) for row in ids]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, ids))


def _ranking_values(records, ks, relation, out):
    for side in ("ALL",) + SIDES:
        if side == "ALL":
            ranks = [x for rec in records for x in (rec.head.rank, rec.tail.rank)]
        else:
            ranks = [rec.side(side).rank for rec in records]
        for k in ks:
            out[(f"hits@{k}", relation, side)] = hits_at_k(ranks, k)
        out[("mrr", relation, side)] = mean_reciprocal_rank(ranks)


def aggregate(records: Sequence[RankRecord], labels, scores, relations, ks, names) -> EvalReport:
    """Build a report from per-triple rank records and labeled scores.

    ``relations`` gives the relation index of each labeled score.
    """
    report = EvalReport(tuple(ks), records=list(records))
    values = report.values
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    relations = np.asarray(relations, dtype=np.int64)
    values[("triples", "ALL", "ALL")] = float(len(records))
    values[("negatives", "ALL", "ALL")] = float((~labels).sum())
    _ranking_values(records, ks, "ALL", values)
    if labels.any() and (~labels).any():
        values[("roc_auc", "ALL", "ALL")] = roc_auc(labels, scores)
        values[("pr_auc", "ALL", "ALL")] = pr_auc(labels, scores)
    else:
        report.flags.append("classification_skipped")
    by_rel: dict[int, list[RankRecord]] = {}
    for rec in records:
        by_rel.setdefault(rec.triple[1], []).append(rec)
    for ri in sorted(by_rel):
        name = names[ri]
        values[("triples", name, "ALL")] = float(len(by_rel[ri]))
        _ranking_values(by_rel[ri], ks, name, values)
        mask = relations == ri
        y = labels[mask]
        if y.any() and (~y).any():
            values[("roc_auc", name, "ALL")] = roc_auc(y, scores[mask])
            values[("pr_auc", name, "ALL")] = pr_auc(y, scores[mask])
    return report


def evaluate(scorer: Scorer, split, ks: Sequence[int] = DEFAULT_KS, filtered: bool = True,
             typed: bool = True, threads: int | None = None, part: str = "test") -> EvalReport:
    """Evaluate ``scorer`` on the test part of ``split``.

    Ranking metrics pool head and tail ranks of every test triple
    (per-side values are reported too); ROC and PR AUC compare test
    positives against test negatives.  Everything is also broken down
    by relation.
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    g = split.graph
    pos = split.part(part)
    neg = split.part(part + "_neg")
    if len(pos) == 0:
        raise KGBenchError(f"cannot evaluate on an empty {part} set")
    known = split.known_positives() if filtered else None
    records = rank_triples(scorer, pos, g, known, filtered, typed, threads)
    batch = np.concatenate([pos, neg])
    scores = _scores(scorer, batch) if len(neg) else np.empty(0)
    labels = np.r_[np.ones(len(pos), bool), np.zeros(len(neg), bool)]
    if not len(neg):
        labels = labels[:0]
    return aggregate(records, labels, scores, batch[: len(labels), 1], ks, g.schema.names)

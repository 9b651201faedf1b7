"""TransE and TransR baselines trained with margin-ranking SGD.

Both models are plain numpy.  Scores are negated translation distances,
so a model instance is itself a scorer: ``model(ids)`` returns one score
per ``(head, relation, tail)`` row of graph indices.
"""

from __future__ import annotations

import copy
import math
import os
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import DataError, DivergenceError, KGBenchError

KINDS = ("transE", "transR")


@dataclass(frozen=True)
class Hyperparams:
    dim: int = 50
    margin: float = 1.0
    lr: float = 0.01
    p: int = 2
    epochs: int = 100
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError("norm p must be 1 or 2")
        for name in ("dim", "epochs", "batch_size"):
            if int(getattr(self, name)) < 0 or (name != "epochs" and int(getattr(self, name)) == 0):
                raise ValueError(f"{name} must be positive")
        if not (self.margin > 0 and self.lr > 0):
            raise ValueError("margin and learning rate must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _norm(v: np.ndarray, p: int) -> np.ndarray:
    return np.abs(v).sum(axis=-1) if p == 1 else np.sqrt((v * v).sum(axis=-1))


def _norm_grad(v: np.ndarray, n: np.ndarray, p: int) -> np.ndarray:
    """d||v||_p / dv row-wise; zero subgradient at kinks."""
    if p == 1:
        return np.sign(v)
    safe = np.where(n > 0, n, 1.0)
    return np.where((n > 0)[:, None], v / safe[:, None], 0.0)


def project_unit_ball(x: np.ndarray, p: int) -> np.ndarray:
    n = _norm(x, p)
    over = n > 1.0
    if over.any():
        x[over] /= n[over][:, None]
        # guard against rounding leaving the norm a hair above 1
        still = _norm(x[over], p) > 1.0
        if still.any():
            idx = np.flatnonzero(over)[still]
            x[idx] = np.nextafter(x[idx], 0.0)
    return x


class TransE:
    kind = "transE"

    def __init__(self, entity: np.ndarray, relation: np.ndarray, p: int = 2,
                 entity_names=None, relation_names=None):
        self.entity = np.asarray(entity, dtype=np.float64)
        self.relation = np.asarray(relation, dtype=np.float64)
        self.p = p
        self.entity_names = list(entity_names) if entity_names is not None else [str(i) for i in range(len(self.entity))]
        self.relation_names = list(relation_names) if relation_names is not None else [str(i) for i in range(len(self.relation))]

    @property
    def dim(self) -> int:
        return self.entity.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"entity": self.entity, "relation": self.relation}

    def copy(self):
        return copy.deepcopy(self)

    def _translate(self, ids):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1, 3)
        return self.entity[ids[:, 0]] + self.relation[ids[:, 1]] - self.entity[ids[:, 2]]

    def distance(self, ids) -> np.ndarray:
        return _norm(self._translate(ids), self.p)

    def __call__(self, ids) -> np.ndarray:
        return -self.distance(ids)

    score = __call__

    def _distance_and_backprop(self, ids):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1, 3)
        v = self._translate(ids)
        d = _norm(v, self.p)
        g = _norm_grad(v, d, self.p)

        def backprop(weight, grads):
            gw = g * weight[:, None]
            np.add.at(grads["entity"], ids[:, 0], gw)
            np.add.at(grads["relation"], ids[:, 1], gw)
            np.add.at(grads["entity"], ids[:, 2], -gw)

        return d, backprop

    def batch_loss(self, pos, neg, margin: float):
        """Summed hinge loss ``max(0, margin + d(pos) - d(neg))`` and its gradient."""
        d_pos, back_pos = self._distance_and_backprop(pos)
        d_neg, back_neg = self._distance_and_backprop(neg)
        losses = margin + d_pos - d_neg
        active = (losses > 0).astype(np.float64)
        grads = {k: np.zeros_like(v) for k, v in self.params().items()}
        back_pos(active, grads)
        back_neg(-active, grads)
        return float((losses * active).sum()), grads, losses.clip(min=0)


class TransR(TransE):
    """TransE with a square per-relation projection of the entities.

    ``score`` uses the plain projection.  During training the projected
    entities are clipped into the unit ball first.
    """

    kind = "transR"

    def __init__(self, entity, relation, projection, p: int = 2, entity_names=None, relation_names=None):
        super().__init__(entity, relation, p, entity_names, relation_names)
        self.projection = np.asarray(projection, dtype=np.float64)

    def params(self):
        return {"entity": self.entity, "relation": self.relation, "projection": self.projection}

    def _translate(self, ids):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1, 3)
        m = self.projection[ids[:, 1]]
        diff = self.entity[ids[:, 0]] - self.entity[ids[:, 2]]
        return np.einsum("nij,nj->ni", m, diff) + self.relation[ids[:, 1]]

    def _clip(self, x):
        n = _norm(x, self.p)
        scale = np.maximum(n, 1.0)
        return x / scale[:, None], n

    def _clip_backprop(self, x, n, g):
        """Pull ``g`` (gradient w.r.t. clip(x)) back to ``x``."""
        over = n > 1.0
        out = g.copy()
        if over.any():
            xo, no, go = x[over], n[over][:, None], g[over]
            dn = _norm_grad(xo, n[over], self.p)
            out[over] = go / no - dn * ((go * xo).sum(axis=1, keepdims=True) / no**2)
        return out

    def _distance_and_backprop(self, ids):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1, 3)
        m = self.projection[ids[:, 1]]
        eh, et = self.entity[ids[:, 0]], self.entity[ids[:, 2]]
        ph_raw = np.einsum("nij,nj->ni", m, eh)
        pt_raw = np.einsum("nij,nj->ni", m, et)
        ph, nh = self._clip(ph_raw)
        pt, nt = self._clip(pt_raw)
        v = ph + self.relation[ids[:, 1]] - pt
        d = _norm(v, self.p)
        g = _norm_grad(v, d, self.p)

        def backprop(weight, grads):
            gw = g * weight[:, None]
            gh = self._clip_backprop(ph_raw, nh, gw)
            gt = self._clip_backprop(pt_raw, nt, -gw)
            np.add.at(grads["relation"], ids[:, 1], gw)
            np.add.at(grads["entity"], ids[:, 0], np.einsum("nij,ni->nj", m, gh))
            np.add.at(grads["entity"], ids[:, 2], np.einsum("nij,ni->nj", m, gt))
            gm = np.einsum("ni,nj->nij", gh, eh) + np.einsum("ni,nj->nij", gt, et)
            np.add.at(grads["projection"], ids[:, 1], gm)

        return d, backprop


def init_model(kind: str, n_entities: int, n_relations: int, hp: Hyperparams,
               entity_names=None, relation_names=None):
    """Uniform init in ``[-6/sqrt(d), 6/sqrt(d)]``, unit-norm relations.

    TransR projections start as identity matrices.
    """
    if kind not in KINDS:
        raise KGBenchError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    if n_entities <= 0 or n_relations <= 0:
        raise KGBenchError("model needs at least one entity and one relation")
    d = hp.dim
    bound = 6.0 / math.sqrt(d)
    rng = rngmod.stream(hp.seed, "init_model", kind)
    entity = rng.uniform(-bound, bound, size=(n_entities, d))
    relation = rng.uniform(-bound, bound, size=(n_relations, d))
    relation /= _norm(relation, hp.p)[:, None]
    if kind == "transE":
        return TransE(entity, relation, hp.p, entity_names, relation_names)
    projection = np.repeat(np.eye(d)[None], n_relations, axis=0)
    return TransR(entity, relation, projection, hp.p, entity_names, relation_names)


def score_transe(model: TransE, triple, p: int | None = None) -> float:
    h, r, t = triple
    v = model.entity[h] + model.relation[r] - model.entity[t]
    return -float(_norm(v[None], p or model.p)[0])


def score_transr(model: TransR, triple, p: int | None = None) -> float:
    h, r, t = triple
    m = model.projection[r]
    v = m @ model.entity[h] + model.relation[r] - m @ model.entity[t]
    return -float(_norm(v[None], p or model.p)[0])


def train_epoch(model, positives: np.ndarray, corruptor, hp: Hyperparams, epoch: int = 0) -> float:
    """One pass of minibatch SGD over shuffled positives.

    ``corruptor`` is a :class:`kgbench.split.TypedCorruptor`; positives it
    cannot corrupt are left out of the loss.  Returns the mean hinge loss
    per used positive.
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    if len(positives) == 0:
        raise KGBenchError("cannot train on an empty positive set")
    rng = rngmod.stream(hp.seed, "train_epoch", epoch)
    order = rng.permutation(len(positives))
    total, count = 0.0, 0
    for b, start in enumerate(range(0, len(order), hp.batch_size)):
        batch = positives[order[start:start + hp.batch_size]]
        neg, ok = corruptor.corrupt(batch, rng, unique=False)
        if not ok.any():
            continue
        loss, grads, _ = model.batch_loss(batch[ok], neg[ok], hp.margin)
        if not math.isfinite(loss):
            raise DivergenceError(b, loss)
        if loss > 0:
            for name, param in model.params().items():
                param -= hp.lr * grads[name]
                if not np.all(np.isfinite(param)):
                    raise DivergenceError(b, float("nan"))
            project_unit_ball(model.entity, model.p)
        total += loss
        count += int(ok.sum())
    return total / count if count else 0.0


@dataclass(frozen=True)
class EarlyStopping:
    every: int = 10
    patience: int = 3
    enabled: bool = True


def train(kind: str, split, hp: Hyperparams, early_stop: EarlyStopping = EarlyStopping(), log=None):
    """Train a model on ``split.train``.

    When the split has a validation part and early stopping is enabled,
    filtered validation MRR is checked every ``early_stop.every`` epochs;
    training stops after ``patience`` checks without improvement and the
    best checkpoint is returned.

    Returns
    -------
    (model, list of per-epoch mean losses)
    """
    from .metrics import mean_reciprocal_rank, rank_triples
    from .split import TypedCorruptor

    g = split.graph
    model = init_model(kind, g.n_entities, g.n_relations, hp,
                       [str(e) for e in g.entities], list(g.schema.names))
    losses: list[float] = []
    if hp.epochs == 0:
        return model, losses
    corruptor = TypedCorruptor(g, known=split.train_index())
    use_valid = early_stop.enabled and len(split.valid) > 0
    known = split.known_positives() if use_valid else None
    best, best_mrr, stale = None, -1.0, 0
    for epoch in range(hp.epochs):
        losses.append(train_epoch(model, split.train, corruptor, hp, epoch))
        if log is not None:
            log(epoch, losses[-1])
        if use_valid and (epoch + 1) % early_stop.every == 0:
            records = rank_triples(model, split.valid, g, known, threads=1)
            mrr = mean_reciprocal_rank([x for r in records for x in (r.head.rank, r.tail.rank)])
            if mrr > best_mrr:
                best, best_mrr, stale = model.copy(), mrr, 0
            else:
                stale += 1
                if stale >= early_stop.patience:
                    break
    if best is not None:
        return best, losses
    return model, losses


def _fmt(values) -> str:
    return "\t".join(format(float(x), ".17g") for x in values)


def save_model(model, path) -> None:
    n_ent, d = model.entity.shape
    lines = [f"{model.kind}\t{d}\t{n_ent}\t{len(model.relation)}\n", f"#\tp\t{model.p}\n"]
    for name, row in zip(model.entity_names, model.entity):
        lines.append(f"E\t{name}\t{_fmt(row)}\n")
    for name, row in zip(model.relation_names, model.relation):
        lines.append(f"R\t{name}\t{_fmt(row)}\n")
    if isinstance(model, TransR):
        for name, mat in zip(model.relation_names, model.projection):
            lines.append(f"M\t{name}\t{_fmt(mat.reshape(-1))}\n")
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(lines))
    os.replace(tmp, path)


def load_model(path):
    """Read a model file; every malformed line raises :class:`DataError`."""
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise DataError(f"cannot read model: {exc.strerror}", path) from None
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataError("empty model file", path, 1)
    head = lines[0].split("\t")
    if len(head) != 4 or head[0] not in KINDS:
        raise DataError("bad header, expected KIND<TAB>d<TAB>|E|<TAB>|R|", path, 1)
    kind = head[0]
    try:
        d, n_ent, n_rel = (int(x) for x in head[1:])
    except ValueError:
        raise DataError("non-integer sizes in header", path, 1) from None
    p = 2
    rows = {"E": [], "R": [], "M": []}
    names = {"E": [], "R": [], "M": []}
    width = {"E": d, "R": d, "M": d * d}
    for lineno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        if cols[0] == "#":
            if len(cols) == 3 and cols[1] == "p" and cols[2] in ("1", "2"):
                p = int(cols[2])
            continue
        tag = cols[0]
        if tag not in rows or (tag == "M" and kind != "transR"):
            raise DataError(f"unknown row tag {tag!r}", path, lineno)
        if len(cols) - 2 != width[tag]:
            raise DataError(f"shape mismatch: {tag} row has {len(cols) - 2} values, header implies {width[tag]}", path, lineno)
        try:
            rows[tag].append([float(x) for x in cols[2:]])
        except ValueError:
            raise DataError("non-numeric value", path, lineno) from None
        names[tag].append(cols[1])
    expected = {"E": n_ent, "R": n_rel, "M": n_rel if kind == "transR" else 0}
    for tag, n in expected.items():
        if len(rows[tag]) != n:
            raise DataError(f"truncated or oversized file: {len(rows[tag])} {tag} rows, header declares {n}",
                            path, len(lines) + 1)
    entity = np.array(rows["E"], dtype=np.float64).reshape(n_ent, d)
    relation = np.array(rows["R"], dtype=np.float64).reshape(n_rel, d)
    if kind == "transE":
        return TransE(entity, relation, p, names["E"], names["R"])
    projection = np.array(rows["M"], dtype=np.float64).reshape(n_rel, d, d)
    return TransR(entity, relation, projection, p, names["E"], names["R"])


def align_model(model, graph):
    """Reorder a loaded model's rows to the graph's entity and relation order."""
    ent_pos = {n: i for i, n in enumerate(model.entity_names)}
    rel_pos = {n: i for i, n in enumerate(model.relation_names)}
    try:
        ei = [ent_pos[str(e)] for e in graph.entities]
        ri = [rel_pos[r] for r in graph.schema.names]
    except KeyError as exc:
        raise DataError(f"model has no row for {exc.args[0]!r}") from None
    out = model.copy()
    out.entity = model.entity[ei]
    out.relation = model.relation[ri]
    out.entity_names = [str(e) for e in graph.entities]
    out.relation_names = list(graph.schema.names)
    if isinstance(model, TransR):
        out.projection = model.projection[ri]
    return out

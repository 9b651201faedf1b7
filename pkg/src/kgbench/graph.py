"""Typed triples, the assembled graph and its lookup indices."""

from __future__ import annotations

import datetime as _dt
import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError, SchemaError
from .schema import SEPARATOR, RelationSchema


@dataclass(frozen=True, slots=True)
class EntityId:
    """An entity, identified by ``(node_type, local_id)``.

    ``index`` is the dense intern index of the vocabulary the entity
    came from.  It takes no part in equality or hashing, so entities
    from different vocabularies compare equal when their names do.
    """

    node_type: str
    local_id: str
    index: int = field(default=-1, compare=False, hash=False)
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # entities are hashed millions of times during assembly
        object.__setattr__(self, "_hash", hash((self.node_type, self.local_id)))

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return f"{self.node_type}{SEPARATOR}{self.local_id}"


class Polarity(str, enum.Enum):
    POSITIVE = "+"
    NEGATIVE = "-"


class Triple(NamedTuple):
    head: EntityId
    relation: str
    tail: EntityId
    polarity: Polarity = Polarity.POSITIVE
    quality: float | None = None
    source: str = ""
    timestamp: _dt.date | None = None

    @property
    def key(self):
        return (self.head, self.relation, self.tail, self.polarity)

    @property
    def spo(self):
        return (self.head, self.relation, self.tail)

    def __str__(self) -> str:
        return f"{self.head}\t{self.relation}\t{self.tail}"


class Vocabulary:
    """Interns ``TYPE:id`` strings into :class:`EntityId` objects."""

    def __init__(self, entities: Iterable[EntityId] = ()):
        self._entities: list[EntityId] = []
        self._by_name: dict[str, EntityId] = {}
        for e in entities:
            self.intern(e.node_type, e.local_id)

    def __len__(self) -> int:
        return len(self._entities)

    def __getitem__(self, index: int) -> EntityId:
        return self._entities[index]

    def __iter__(self):
        return iter(self._entities)

    def __contains__(self, name) -> bool:
        return str(name) in self._by_name

    def get(self, name: str) -> EntityId | None:
        return self._by_name.get(name)

    def intern(self, node_type: str, local_id: str) -> EntityId:
        name = f"{node_type}{SEPARATOR}{local_id}"
        e = self._by_name.get(name)
        if e is None:
            e = EntityId(node_type, local_id, len(self._entities))
            self._entities.append(e)
            self._by_name[name] = e
        return e

    def parse(self, name: str) -> EntityId:
        """Intern a ``TYPE:id`` string; the id may itself contain ``:``."""
        e = self._by_name.get(name)
        if e is not None:
            return e
        node_type, sep, local_id = name.partition(SEPARATOR)
        if not sep or not node_type or not local_id:
            raise ValueError(f"entity {name!r} is not of the form TYPE:id")
        if any(c.isspace() for c in node_type):
            raise ValueError(f"entity {name!r} has whitespace in its node type")
        return self.intern(node_type, local_id)


class Inference(str, enum.Enum):
    NONE = "none"
    REVERSE_SYMMETRIC = "reverse_symmetric"
    INVERSE = "inverse"
    SUPER_RELATION = "super_relation"


def is_trivially_inferable(candidate: Triple, train, schema: RelationSchema) -> Inference:
    """Report why ``candidate`` follows from the training edges, if it does.

    ``train`` is any container answering ``(head, relation, tail) in
    train``.  Checks run in the order reverse-symmetric, inverse,
    super-relation and the first hit is returned.
    """
    h, r, t = candidate.head, candidate.relation, candidate.tail
    rel = schema[r]
    if rel.symmetric and (t, r, h) in train:
        return Inference.REVERSE_SYMMETRIC
    if rel.inverse_of is not None and (t, rel.inverse_of, h) in train:
        return Inference.INVERSE
    for child in sorted(schema.descendants(r)):
        if (h, child, t) in train:
            return Inference.SUPER_RELATION
    return Inference.NONE


def canonical_form(t: Triple, schema: RelationSchema) -> Triple:
    if schema[t.relation].symmetric and t.head.index > t.tail.index:
        return t._replace(head=t.tail, tail=t.head)
    return t


class KeyIndex:
    """Sorted array of encoded ``(head, relation, tail)`` keys.

    Keys are ``(head * n_rel + rel) * n_ent + tail`` over dense indices,
    which makes membership tests vectorisable via ``searchsorted``.
    """

    def __init__(self, ids: np.ndarray, n_ent: int, n_rel: int):
        self.n_ent = int(n_ent)
        self.n_rel = int(n_rel)
        ids = np.asarray(ids, dtype=np.int64).reshape(-1, 3)
        self.keys = np.unique(self.encode(ids[:, 0], ids[:, 1], ids[:, 2]))

    def encode(self, h, r, t):
        h = np.asarray(h, dtype=np.int64)
        return (h * self.n_rel + r) * self.n_ent + t

    def decode(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        t = keys % self.n_ent
        hr = keys // self.n_ent
        return np.stack([hr // self.n_rel, hr % self.n_rel, t], axis=1)

    def __len__(self) -> int:
        return len(self.keys)

    def contains_keys(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        if len(self.keys) == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, len(self.keys) - 1)
        return self.keys[pos] == keys

    def contains(self, h, r, t) -> np.ndarray:
        return self.contains_keys(self.encode(h, r, t))

    def union(self, other: "KeyIndex") -> "KeyIndex":
        out = KeyIndex.__new__(KeyIndex)
        out.n_ent, out.n_rel = self.n_ent, self.n_rel
        out.keys = np.union1d(self.keys, other.keys)
        return out


class TripleSet:
    """``(head, relation, tail)`` membership over a :class:`KeyIndex`.

    Adapts the array index to the container protocol expected by
    :func:`is_trivially_inferable`.
    """

    def __init__(self, graph: "Graph", index: KeyIndex):
        self.graph = graph
        self.index = index

    def __contains__(self, spo) -> bool:
        h, r, t = spo
        g = self.graph
        hi, ti = g.entity_index(h), g.entity_index(t)
        if hi < 0 or ti < 0 or r not in g.schema:
            return False
        return bool(self.index.contains(hi, g.schema.index(r), ti))

    def __len__(self) -> int:
        return len(self.index)


class Graph:
    """Deduplicated, immutable triple store with lookup indices.

    Triples are held column-wise: ``pos_ids``/``neg_ids`` are ``(n, 3)``
    int arrays of ``(head index, relation index, tail index)``; quality,
    source and timestamp ride alongside.  Use :func:`kgbench.ingest.assemble_graph`
    to build one from raw triples.
    """

    def __init__(self, schema: RelationSchema, entities: Sequence[EntityId], positives: Sequence[Triple], negatives: Sequence[Triple] = ()):
        self.schema = schema
        self.entities: tuple[EntityId, ...] = tuple(entities)
        for i, e in enumerate(self.entities):
            if e.index != i:
                raise ValueError("entity indices must be 0..n-1 in order")
        self._lookup = {e: e.index for e in self.entities}
        self.node_types = schema.node_types
        type_pos = {nt: i for i, nt in enumerate(self.node_types)}
        try:
            self.entity_type = np.array([type_pos[e.node_type] for e in self.entities], dtype=np.int64)
        except KeyError as exc:
            raise SchemaError(f"node type {exc.args[0]!r} is not in the schema") from None
        self._by_type = {nt: np.flatnonzero(self.entity_type == i) for i, nt in enumerate(self.node_types)}

        self.positives = tuple(positives)
        self.negatives = tuple(negatives)
        self.pos_ids = self._encode(self.positives)
        self.neg_ids = self._encode(self.negatives)
        n_ent, n_rel = max(len(self.entities), 1), max(len(schema), 1)
        self.pos_index = KeyIndex(self.pos_ids, n_ent, n_rel)
        self.neg_index = KeyIndex(self.neg_ids, n_ent, n_rel)
        if len(self.pos_index) != len(self.positives) or len(self.neg_index) != len(self.negatives):
            raise ValueError("duplicate triples in graph input")
        self._adjacency = {}

    def _encode(self, triples: Sequence[Triple]) -> np.ndarray:
        lookup, rel = self._lookup, {name: i for i, name in enumerate(self.schema.names)}
        try:
            flat = np.fromiter((x for tr in triples for x in (lookup[tr.head], rel[tr.relation], lookup[tr.tail])),
                               dtype=np.int64, count=3 * len(triples))
        except KeyError as exc:
            if isinstance(exc.args[0], str):
                raise SchemaError(f"unknown relation {exc.args[0]!r}") from None
            raise
        return flat.reshape(-1, 3)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.schema)

    def entity_index(self, e: EntityId) -> int:
        return self._lookup.get(e, -1)

    def entities_of_type(self, node_type: str) -> np.ndarray:
        """Dense indices of the entities of one node type."""
        return self._by_type.get(node_type, np.empty(0, dtype=np.int64))

    def domain_range_ids(self) -> tuple[np.ndarray, np.ndarray]:
        """Per relation index, the node-type index of its domain and range."""
        type_pos = {nt: i for i, nt in enumerate(self.node_types)}
        dom = np.array([type_pos[r.domain] for r in self.schema], dtype=np.int64)
        rng = np.array([type_pos[r.range] for r in self.schema], dtype=np.int64)
        return dom, rng

    def contains(self, h: EntityId, relation: str, t: EntityId, polarity=Polarity.POSITIVE) -> bool:
        index = self.pos_index if polarity == Polarity.POSITIVE else self.neg_index
        return (h, relation, t) in TripleSet(self, index)

    def __contains__(self, triple: Triple) -> bool:
        return self.contains(triple.head, triple.relation, triple.tail, triple.polarity)

    def positive_set(self) -> TripleSet:
        return TripleSet(self, self.pos_index)

    def _adj(self, column: int):
        if column not in self._adjacency:
            col = self.pos_ids[:, column]
            size = self.n_entities if column != 1 else self.n_relations
            order = np.argsort(col, kind="stable")
            offsets = np.zeros(size + 1, dtype=np.int64)
            np.cumsum(np.bincount(col, minlength=size), out=offsets[1:])
            self._adjacency[column] = (order, offsets)
        return self._adjacency[column]

    def _slice(self, column: int, i: int) -> list[Triple]:
        order, offsets = self._adj(column)
        if i < 0 or i + 1 >= len(offsets):
            return []
        return [self.positives[j] for j in order[offsets[i]:offsets[i + 1]]]

    def by_head(self, e: EntityId) -> list[Triple]:
        """Positive triples with head ``e``, in graph order."""
        return self._slice(0, self.entity_index(e))

    def by_tail(self, e: EntityId) -> list[Triple]:
        return self._slice(2, self.entity_index(e))

    def by_relation(self, relation: str) -> list[Triple]:
        if relation not in self.schema:
            return []
        return self._slice(1, self.schema.index(relation))

    def ids_to_triples(self, ids: np.ndarray, polarity=Polarity.POSITIVE) -> list[Triple]:
        ents, names = self.entities, self.schema.names
        return [Triple(ents[h], names[r], ents[t], polarity) for h, r, t in np.asarray(ids).tolist()]

    def triples_to_ids(self, triples: Iterable[Triple]) -> np.ndarray:
        return self._encode(list(triples))


@dataclass
class GraphStats:
    entities_per_type: dict[str, int]
    triples_per_relation: dict[str, int]
    negatives_per_relation: dict[str, int]
    n_entities: int
    n_triples: int
    n_negatives: int
    n_node_types: int
    n_edge_types: int

    def rows(self):
        yield "entities", self.n_entities
        yield "triples", self.n_triples
        yield "negatives", self.n_negatives
        yield "node_types", self.n_node_types
        yield "edge_types", self.n_edge_types
        for nt, n in self.entities_per_type.items():
            yield f"entities.{nt}", n
        for r, n in self.triples_per_relation.items():
            yield f"triples.{r}", n
        for r, n in self.negatives_per_relation.items():
            yield f"negatives.{r}", n


def graph_stats(g: Graph) -> GraphStats:
    """Counts of entities per node type and positive triples per relation.

    Node and edge type counts only include types that actually occur.
    """
    per_type = Counter(e.node_type for e in g.entities)
    names = g.schema.names
    pos = np.bincount(g.pos_ids[:, 1], minlength=len(names)) if len(g.pos_ids) else np.zeros(len(names), int)
    neg = np.bincount(g.neg_ids[:, 1], minlength=len(names)) if len(g.neg_ids) else np.zeros(len(names), int)
    per_rel = {n: int(c) for n, c in zip(names, pos) if c}
    neg_rel = {n: int(c) for n, c in zip(names, neg) if c}
    return GraphStats(
        entities_per_type={nt: per_type[nt] for nt in g.node_types if per_type[nt]},
        triples_per_relation=per_rel,
        negatives_per_relation=neg_rel,
        n_entities=g.n_entities,
        n_triples=len(g.positives),
        n_negatives=len(g.negatives),
        n_node_types=sum(1 for nt in g.node_types if per_type[nt]),
        n_edge_types=len(set(per_rel) | set(neg_rel)),
    )


def check_typing(t: Triple, schema: RelationSchema) -> None:
    rel = schema[t.relation]
    if t.head.node_type != rel.domain or t.tail.node_type != rel.range:
        raise DataError(
            f"{t.relation} expects {rel.domain} -> {rel.range}, got {t.head.node_type} -> {t.tail.node_type}"
        )

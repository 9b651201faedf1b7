"""Relation schemas: symmetry, inverses, hierarchy and disjointness.

A schema is loaded from a tab-separated file with one relation per line::

    name  domain  range  symmetric(0|1)  inverse_of  parents  disjoint_with

``-`` marks an empty field, multi-valued fields are comma separated and
lines starting with ``#`` are ignored.  Node types are whatever appears
in the domain and range columns, in order of first appearance.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import DataError, SchemaError

SEPARATOR = ":"
EMPTY = "-"
N_COLUMNS = 7


def check_node_type(name: str) -> str:
    if not name or any(c.isspace() for c in name) or SEPARATOR in name:
        raise SchemaError(f"invalid node type name {name!r}")
    return name


def _check_relation_name(name: str) -> str:
    if not name or name == EMPTY or any(c.isspace() or c == "," for c in name) or name.startswith("#"):
        raise SchemaError(f"invalid relation name {name!r}")
    return name


@dataclass(frozen=True)
class RelationDef:
    name: str
    domain: str
    range: str
    symmetric: bool = False
    inverse_of: str | None = None
    parents: frozenset[str] = frozenset()
    disjoint_with: frozenset[str] = frozenset()

    def __post_init__(self):
        # accept any iterable for the set-valued fields
        object.__setattr__(self, "parents", frozenset(self.parents))
        object.__setattr__(self, "disjoint_with", frozenset(self.disjoint_with))


@dataclass(frozen=True)
class RelationSchema:
    """A validated relation schema.

    Only :func:`validate_schema` should build instances; it fills in the
    transitive ancestor/descendant closure used by the leakage checks.
    """

    relations: tuple[RelationDef, ...]
    node_types: tuple[str, ...]
    _by_name: Mapping[str, RelationDef] = field(repr=False, compare=False)
    _index: Mapping[str, int] = field(repr=False, compare=False)
    _ancestors: Mapping[str, frozenset[str]] = field(repr=False, compare=False)
    _descendants: Mapping[str, frozenset[str]] = field(repr=False, compare=False)

    def __getitem__(self, name: str) -> RelationDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"unknown relation {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self.relations)

    def __iter__(self):
        return iter(self.relations)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.relations)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown relation {name!r}") from None

    def ancestors(self, name: str) -> frozenset[str]:
        """All transitive super-relations of ``name`` (excluding itself)."""
        self[name]
        return self._ancestors[name]

    def descendants(self, name: str) -> frozenset[str]:
        self[name]
        return self._descendants[name]

    @property
    def n_node_types(self) -> int:
        return len(self.node_types)

    def to_records(self) -> list[RelationDef]:
        return list(self.relations)


def _closure(edges: Mapping[str, Iterable[str]], names: Iterable[str]) -> dict[str, frozenset[str]]:
    out = {}
    for start in names:
        seen: set[str] = set()
        stack = list(edges[start])
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(edges[n])
        out[start] = frozenset(seen)
    return out


def _find_cycle(parents: Mapping[str, Iterable[str]]) -> list[str] | None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = dict.fromkeys(parents, WHITE)
    for root in parents:
        if color[root] != WHITE:
            continue
        path = [root]
        iters = [iter(sorted(parents[root]))]
        color[root] = GREY
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                color[path.pop()] = BLACK
                iters.pop()
            elif color[nxt] == GREY:
                return path[path.index(nxt):] + [nxt]
            elif color[nxt] == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                iters.append(iter(sorted(parents[nxt])))
    return None


def validate_schema(relations: Iterable[RelationDef]) -> RelationSchema:
    """Check every relation invariant and return an immutable schema.

    Raises
    ------
    SchemaError
        On duplicate names, dangling references, a symmetric relation
        whose domain and range differ, a non-mutual inverse or
        disjointness, a cyclic hierarchy, a child whose typing differs
        from its parent, or disjointness with an ancestor.
    """
    relations = tuple(relations)
    by_name: dict[str, RelationDef] = {}
    node_types: dict[str, None] = {}
    for r in relations:
        _check_relation_name(r.name)
        if r.name in by_name:
            raise SchemaError(f"duplicate relation name {r.name!r}")
        by_name[r.name] = r
        node_types.setdefault(check_node_type(r.domain))
        node_types.setdefault(check_node_type(r.range))

    for r in relations:
        refs = set(r.parents) | set(r.disjoint_with)
        if r.inverse_of is not None:
            refs.add(r.inverse_of)
        for ref in sorted(refs):
            if ref not in by_name:
                raise SchemaError(f"relation {r.name!r} references unknown relation {ref!r}")
        if r.symmetric and r.domain != r.range:
            raise SchemaError(f"symmetric relation {r.name!r} has domain {r.domain} != range {r.range}")
        if r.inverse_of is not None:
            s = by_name[r.inverse_of]
            if s.inverse_of != r.name:
                raise SchemaError(f"non-mutual inverse: {r.name!r} -> {s.name!r}")
            if r.domain != s.range or r.range != s.domain:
                raise SchemaError(f"inverse pair {r.name!r}/{s.name!r} has incompatible typing")
        if r.name in r.disjoint_with:
            raise SchemaError(f"relation {r.name!r} is disjoint with itself")
        for d in sorted(r.disjoint_with):
            other = by_name[d]
            if r.name not in other.disjoint_with:
                raise SchemaError(f"non-mutual disjointness: {r.name!r} -> {d!r}")
            if (other.domain, other.range) != (r.domain, r.range):
                raise SchemaError(f"disjoint pair {r.name!r}/{d!r} has different typing")
        for p in sorted(r.parents):
            parent = by_name[p]
            if (parent.domain, parent.range) != (r.domain, r.range):
                raise SchemaError(f"child {r.name!r} typing differs from parent {p!r}")

    parents = {r.name: r.parents for r in relations}
    cycle = _find_cycle(parents)
    if cycle:
        raise SchemaError("cyclic hierarchy: " + " -> ".join(cycle))
    ancestors = _closure(parents, by_name)
    children: dict[str, set[str]] = {name: set() for name in by_name}
    for r in relations:
        for p in r.parents:
            children[p].add(r.name)
    descendants = _closure(children, by_name)

    for r in relations:
        clash = r.disjoint_with & ancestors[r.name]
        if clash:
            raise SchemaError(f"relation {r.name!r} is disjoint with its ancestor {min(clash)!r}")

    return RelationSchema(
        relations=relations,
        node_types=tuple(node_types),
        _by_name=by_name,
        _index={r.name: i for i, r in enumerate(relations)},
        _ancestors=ancestors,
        _descendants=descendants,
    )


def _multi(value: str) -> frozenset[str]:
    if value == EMPTY or value == "":
        return frozenset()
    return frozenset(v.strip() for v in value.split(",") if v.strip())


def parse_schema(lines: Iterable[str], path=None) -> RelationSchema:
    records = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != N_COLUMNS:
            raise DataError(f"expected {N_COLUMNS} columns, got {len(cols)}", path, lineno)
        name, domain, range_, sym, inv, parents, disjoint = (c.strip() for c in cols)
        if sym not in ("0", "1"):
            raise DataError(f"symmetric flag must be 0 or 1, got {sym!r}", path, lineno)
        try:
            records.append(
                RelationDef(
                    name=name,
                    domain=domain,
                    range=range_,
                    symmetric=sym == "1",
                    inverse_of=None if inv in (EMPTY, "") else inv,
                    parents=_multi(parents),
                    disjoint_with=_multi(disjoint),
                )
            )
        except SchemaError as exc:
            raise DataError(str(exc), path, lineno) from None
    try:
        return validate_schema(records)
    except SchemaError as exc:
        raise SchemaError(str(exc), path) from None


def read_schema(path) -> RelationSchema:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_schema(fh, path)
    except OSError as exc:
        raise DataError(f"cannot read schema: {exc.strerror}", path) from None


def format_schema(schema: RelationSchema | Iterable[RelationDef]) -> str:
    def multi(values):
        return ",".join(sorted(values)) if values else EMPTY

    out = io.StringIO()
    out.write("# name\tdomain\trange\tsymmetric\tinverse_of\tparents\tdisjoint_with\n")
    for r in schema:
        out.write(
            "\t".join(
                [
                    r.name,
                    r.domain,
                    r.range,
                    "1" if r.symmetric else "0",
                    r.inverse_of or EMPTY,
                    multi(r.parents),
                    multi(r.disjoint_with),
                ]
            )
            + "\n"
        )
    return out.getvalue()


def write_schema(schema, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_schema(schema))

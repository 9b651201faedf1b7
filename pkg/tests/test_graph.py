import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgbench.errors import SchemaError
from kgbench.graph import (
    EntityId,
    Graph,
    Inference,
    KeyIndex,
    Polarity,
    Triple,
    Vocabulary,
    canonical_form,
    graph_stats,
    is_trivially_inferable,
)
from kgbench.ingest import assemble_graph
from kgbench.schema import RelationDef, validate_schema

from _support import SCHEMA, make_graph, random_graph, random_schema

PART_SCHEMA = validate_schema([
    RelationDef("has_part", "ANAT", "ANAT", inverse_of="part_of"),
    RelationDef("part_of", "ANAT", "ANAT", inverse_of="has_part"),
    RelationDef("expressed_in", "GENE", "ANAT"),
    RelationDef("over_expressed_in", "GENE", "ANAT", parents={"expressed_in"}),
    RelationDef("interacts", "GENE", "GENE", symmetric=True),
])


def ent(name, index=-1):
    node_type, _, local = name.partition(":")
    return EntityId(node_type, local, index)


def spo(h, r, t):
    return (ent(h), r, ent(t))


class TestEntityId:
    def test_identity_ignores_index(self):
        assert EntityId("GENE", "1", 0) == EntityId("GENE", "1", 7)
        assert hash(EntityId("GENE", "1", 0)) == hash(EntityId("GENE", "1"))

    def test_same_local_id_two_types(self):
        assert EntityId("GENE", "1") != EntityId("DIS", "1")

    def test_vocabulary_interns_densely(self):
        vocab = Vocabulary()
        a = vocab.parse("GENE:a")
        b = vocab.parse("DIS:a")
        assert (a.index, b.index) == (0, 1)
        assert vocab.parse("GENE:a") is a
        assert str(vocab.parse("GO:GO:0001")) == "GO:GO:0001"

    @pytest.mark.parametrize("bad", ["nocolon", ":x", "GENE:", "GE NE:x"])
    def test_vocabulary_rejects(self, bad):
        with pytest.raises(ValueError):
            Vocabulary().parse(bad)


class TestInferability:
    def test_reverse_symmetric(self):
        train = {spo("GENE:A", "interacts", "GENE:B")}
        cand = Triple(ent("GENE:B"), "interacts", ent("GENE:A"))
        assert is_trivially_inferable(cand, train, PART_SCHEMA) == Inference.REVERSE_SYMMETRIC

    def test_inverse(self):
        train = {spo("ANAT:X", "has_part", "ANAT:Y")}
        cand = Triple(ent("ANAT:Y"), "part_of", ent("ANAT:X"))
        assert is_trivially_inferable(cand, train, PART_SCHEMA) == Inference.INVERSE

    def test_super_relation(self):
        train = {spo("GENE:G", "over_expressed_in", "ANAT:T")}
        cand = Triple(ent("GENE:G"), "expressed_in", ent("ANAT:T"))
        assert is_trivially_inferable(cand, train, PART_SCHEMA) == Inference.SUPER_RELATION

    def test_child_not_inferred_from_parent(self):
        train = {spo("GENE:G", "expressed_in", "ANAT:T")}
        cand = Triple(ent("GENE:G"), "over_expressed_in", ent("ANAT:T"))
        assert is_trivially_inferable(cand, train, PART_SCHEMA) == Inference.NONE

    def test_unrelated(self):
        train = {spo("GENE:A", "interacts", "GENE:B")}
        cand = Triple(ent("GENE:A"), "interacts", ent("GENE:C"))
        assert is_trivially_inferable(cand, train, PART_SCHEMA) == Inference.NONE

    def test_precedence(self):
        schema = validate_schema([
            RelationDef("p", "A", "A", symmetric=True),
            RelationDef("r", "A", "A", symmetric=True, parents={"p"}),
        ])
        train = {spo("A:1", "p", "A:2"), spo("A:2", "r", "A:1")}
        cand = Triple(ent("A:2"), "p", ent("A:1"))
        assert is_trivially_inferable(cand, train, schema) == Inference.REVERSE_SYMMETRIC

    def test_transitive_ancestor(self):
        schema = validate_schema([
            RelationDef("a", "A", "A"),
            RelationDef("b", "A", "A", parents={"a"}),
            RelationDef("c", "A", "A", parents={"b"}),
        ])
        train = {spo("A:1", "c", "A:2")}
        assert is_trivially_inferable(Triple(ent("A:1"), "a", ent("A:2")), train, schema) == Inference.SUPER_RELATION

    def test_unknown_relation(self):
        with pytest.raises(SchemaError):
            is_trivially_inferable(Triple(ent("A:1"), "nope", ent("A:2")), set(), SCHEMA)

    def test_accepts_graph_index(self):
        g = make_graph(["GENE:A interacts GENE:B"])
        cand = Triple(g.entities[1], "interacts", g.entities[0])
        assert is_trivially_inferable(cand, g.positive_set(), SCHEMA) == Inference.REVERSE_SYMMETRIC

    def test_exhaustive_symmetric_small_graphs(self):
        # every subset of interacts edges over 3 genes, including self-loops
        genes = [f"GENE:{i}" for i in range(3)]
        pairs = list(itertools.product(genes, genes))
        for mask in range(1 << len(pairs)):
            edges = [pairs[k] for k in range(len(pairs)) if mask >> k & 1]
            if not edges:
                continue
            g = make_graph([f"{a} interacts {b}" for a, b in edges], negatives=())
            train = g.positive_set()
            for a, b in edges:
                cand = Triple(ent(b), "interacts", ent(a))
                assert is_trivially_inferable(cand, train, SCHEMA) == Inference.REVERSE_SYMMETRIC

    @settings(max_examples=60, deadline=None)
    @given(st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=20))
    def test_symmetric_property_six_entities(self, edges):
        train = {spo(f"GENE:{a}", "interacts", f"GENE:{b}") for a, b in edges}
        for a, b in edges:
            cand = Triple(ent(f"GENE:{b}"), "interacts", ent(f"GENE:{a}"))
            assert is_trivially_inferable(cand, train, SCHEMA) == Inference.REVERSE_SYMMETRIC


class TestCanonicalForm:
    def setup_method(self):
        self.a, self.b = EntityId("GENE", "A", 0), EntityId("GENE", "B", 1)

    def test_swaps_symmetric(self):
        t = Triple(self.b, "interacts", self.a)
        assert canonical_form(t, SCHEMA) == Triple(self.a, "interacts", self.b)

    def test_ordered_unchanged(self):
        t = Triple(self.a, "interacts", self.b)
        assert canonical_form(t, SCHEMA) is t

    @pytest.mark.parametrize("order", [0, 1])
    def test_non_symmetric_unchanged(self, order):
        h, t = (self.a, self.b) if order == 0 else (self.b, self.a)
        tr = Triple(h, "regulates", t)
        assert canonical_form(tr, SCHEMA) is tr

    @given(st.integers(0, 9), st.integers(0, 9), st.sampled_from(["interacts", "regulates", "regulated_by"]))
    def test_idempotent(self, i, j, rel):
        t = Triple(EntityId("GENE", str(i), i), rel, EntityId("GENE", str(j), j))
        once = canonical_form(t, SCHEMA)
        assert canonical_form(once, SCHEMA) == once


class TestGraph:
    def test_dedup_required(self):
        a, b = EntityId("GENE", "A", 0), EntityId("GENE", "B", 1)
        with pytest.raises(ValueError, match="duplicate"):
            Graph(SCHEMA, [a, b], [Triple(a, "regulates", b), Triple(a, "regulates", b, quality=0.5)])

    def test_indices_must_be_dense(self):
        with pytest.raises(ValueError):
            Graph(SCHEMA, [EntityId("GENE", "A", 3)], [])

    def test_same_key_both_polarities(self):
        g = make_graph(["GENE:A regulates GENE:B"], negatives=["GENE:A regulates GENE:B"])
        # positive wins in assembly
        assert len(g.positives) == 1 and len(g.negatives) == 0

    def test_contains(self):
        g = make_graph(["GENE:A regulates GENE:B"], negatives=["GENE:B regulates GENE:A"])
        a, b = g.entities
        assert g.contains(a, "regulates", b)
        assert not g.contains(b, "regulates", a)
        assert g.contains(b, "regulates", a, Polarity.NEGATIVE)
        assert Triple(a, "regulates", b) in g

    def test_entities_of_type(self):
        g = make_graph(["GENE:A associated DIS:X", "GENE:B associated DIS:Y"])
        assert [str(g.entities[i]) for i in g.entities_of_type("DIS")] == ["DIS:X", "DIS:Y"]

    def test_ids_round_trip(self):
        g = make_graph(["GENE:A associated DIS:X", "GENE:B causes DIS:Y"])
        back = g.ids_to_triples(g.triples_to_ids(g.positives))
        assert [t.key for t in back] == [t.key for t in g.positives]

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 1000))
    def test_index_scan_equivalence(self, seed, n_edges):
        rng = np.random.default_rng(seed)
        schema = random_schema(rng)
        g = random_graph(rng, schema, n_edges, 8)
        scan = {t.spo for t in g.positives}
        ents = list(g.entities)
        for _ in range(50):
            r = schema.relations[int(rng.integers(len(schema)))]
            h = ents[int(rng.integers(len(ents)))]
            t = ents[int(rng.integers(len(ents)))]
            assert g.contains(h, r.name, t) == ((h, r.name, t) in scan)
        for t in g.positives:
            assert g.contains(t.head, t.relation, t.tail)
        e = ents[int(rng.integers(len(ents)))]
        assert set(g.by_head(e)) == {t for t in g.positives if t.head == e}
        assert set(g.by_tail(e)) == {t for t in g.positives if t.tail == e}
        r = schema.names[int(rng.integers(len(schema)))]
        assert set(g.by_relation(r)) == {t for t in g.positives if t.relation == r}


class TestKeyIndex:
    def test_membership(self):
        ids = np.array([[0, 1, 2], [2, 0, 1]])
        idx = KeyIndex(ids, 3, 2)
        assert idx.contains(np.array([0, 2, 1]), np.array([1, 0, 0]), np.array([2, 1, 1])).tolist() == [True, True, False]
        assert np.array_equal(idx.decode(idx.keys), ids[np.argsort(idx.encode(ids[:, 0], ids[:, 1], ids[:, 2]))])

    def test_empty(self):
        idx = KeyIndex(np.empty((0, 3), dtype=np.int64), 3, 2)
        assert len(idx) == 0
        assert not idx.contains(np.array([0]), np.array([0]), np.array([0])).any()


class TestGraphStats:
    def test_empty(self):
        g, _ = assemble_graph([], [], SCHEMA)
        s = graph_stats(g)
        assert (s.n_entities, s.n_triples, s.n_negatives, s.n_node_types, s.n_edge_types) == (0, 0, 0, 0, 0)

    def test_hand_counted(self):
        g = make_graph(["GENE:A associated DIS:X", "GENE:A associated DIS:Y", "GENE:B regulates GENE:A"])
        s = graph_stats(g)
        assert (s.n_triples, s.n_edge_types, s.n_entities, s.n_node_types) == (3, 2, 4, 2)
        assert s.entities_per_type == {"GENE": 2, "DIS": 2}
        assert s.triples_per_relation == {"regulates": 1, "associated": 2}

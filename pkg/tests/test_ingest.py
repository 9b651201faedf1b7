import datetime as dt
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgbench.errors import DataError
from kgbench.graph import EntityId, Polarity, Triple
from kgbench.ingest import (
    INFERRED_SOURCE,
    GraphOptions,
    QualitySetting,
    apply_quality_filter,
    assemble_graph,
    build_graph,
    dedupe,
    filter_sources_and_relations,
    infer_true_negatives,
    load_graph,
    make_directed,
    make_undirected,
    parse_edges,
    read_edges,
    read_thresholds,
    save_graph,
    write_edges,
)
from kgbench.schema import RelationDef, validate_schema

from _support import SCHEMA, edge_line, random_edge_lines, random_schema

GENE = [EntityId("GENE", str(i), i) for i in range(6)]
DIS = [EntityId("DIS", str(i), 6 + i) for i in range(3)]
EXPR = validate_schema([
    RelationDef("over_expressed_in", "GENE", "ANAT", disjoint_with={"under_expressed_in"}),
    RelationDef("under_expressed_in", "GENE", "ANAT", disjoint_with={"over_expressed_in"}),
])


def tr(h, r, t, quality=None, source="srcA", **kw):
    return Triple(h, r, t, quality=quality, source=source, **kw)


def keys(triples):
    return {t.spo for t in triples}


class TestParseEdges:
    def test_well_formed_line(self):
        schema = validate_schema([RelationDef("targets", "GENE", "DIS")])
        triples, report = parse_edges(["GENE:7157\ttargets\tDIS:0050686\t0.9\tsrcA"], schema)
        assert len(triples) == 1
        t = triples[0]
        assert (str(t.head), t.relation, str(t.tail), t.quality, t.source) == ("GENE:7157", "targets", "DIS:0050686", 0.9, "srcA")
        assert t.polarity == Polarity.POSITIVE and t.timestamp is None
        assert (report.lines_read, report.parsed, report.errors) == (1, 1, [])

    def test_malformed_line_reported_and_skipped(self):
        lines = ["GENE:1\tinteracts", edge_line("GENE:1", "interacts", "GENE:2")]
        triples, report = parse_edges(lines, SCHEMA)
        assert len(triples) == 1
        assert report.errors[0][0] == 1 and "columns" in report.errors[0][1]

    def test_duplicate_lines_kept_raw(self):
        line = edge_line("GENE:1", "regulates", "GENE:2", "0.5")
        triples, _ = parse_edges([line, line], SCHEMA)
        assert len(triples) == 2

    @pytest.mark.parametrize(
        "line, reason",
        [
            (edge_line("GENE:1", "nope", "GENE:2"), "unknown relation"),
            (edge_line("DIS:1", "interacts", "GENE:2"), "expects GENE -> GENE"),
            (edge_line("GENE:1", "interacts", "GENE:2", quality="1.5"), "outside"),
            (edge_line("GENE:1", "interacts", "GENE:2", quality="x"), "float"),
            (edge_line("GENE:1", "interacts", "GENE:2", date="2020-13-01"), "month"),
            (edge_line("GENE:1", "interacts", "GENE:2", polarity="?"), "polarity"),
            (edge_line("GENE:1", "interacts", "GENE:2", source="-"), "source"),
            (edge_line("GENE1", "interacts", "GENE:2"), "TYPE:id"),
        ],
    )
    def test_bad_fields(self, line, reason):
        triples, report = parse_edges([line], SCHEMA)
        assert triples == []
        assert len(report.errors) == 1 and reason in report.errors[0][1]

    def test_comments_crlf_and_bytes(self):
        data = b"# header\r\n\r\nGENE:1\tinteracts\tGENE:2\t0.5\tsrcA\t2020-01-02\t-\r\n\xff\n"
        triples, report = parse_edges(io.BytesIO(data), SCHEMA)
        assert len(triples) == 1
        assert triples[0].polarity == Polarity.NEGATIVE
        assert triples[0].timestamp == dt.date(2020, 1, 2)
        assert report.errors == [(4, "invalid UTF-8")]
        assert report.lines_read == report.parsed + len(report.errors) == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read edges"):
            read_edges(tmp_path / "nope.tsv", SCHEMA)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.text(alphabet="GENEDIS:01\t-+.abc\n#", max_size=40), max_size=30))
    def test_accounting_identity_fuzz(self, lines):
        triples, report = parse_edges(lines, SCHEMA)
        assert report.lines_read == report.parsed + len(report.errors)
        assert report.parsed == len(triples)

    def test_write_read_round_trip(self, tmp_path):
        lines = random_edge_lines(np.random.default_rng(3), SCHEMA, 50, 10)
        triples, _ = parse_edges(lines, SCHEMA)
        write_edges(triples, tmp_path / "e.tsv")
        again, report = read_edges(tmp_path / "e.tsv", SCHEMA)
        assert not report.errors
        assert [t[:] for t in again] == [t[:] for t in triples]


class TestQualityFilter:
    THRESH = {"srcA": (0.7, 0.5, 0.3), "srcB": (0.4, 0.3, 0.2)}

    def test_all_is_identity(self):
        triples = [tr(GENE[0], "regulates", GENE[1], q) for q in (0.1, 0.9, None)]
        kept, counts = apply_quality_filter(triples, QualitySetting("all"))
        assert kept == triples

    def test_threshold_comparison(self):
        triples = [tr(GENE[0], "regulates", GENE[1], 0.9), tr(GENE[0], "regulates", GENE[2], 0.5)]
        kept, counts = apply_quality_filter(triples, QualitySetting("high", self.THRESH))
        assert [t.quality for t in kept] == [0.9]
        assert counts["quality:srcA"] == 1

    def test_source_specific_cutoffs(self):
        a = tr(GENE[0], "regulates", GENE[1], 0.5, "srcA")
        b = tr(GENE[0], "regulates", GENE[2], 0.5, "srcB")
        kept, _ = apply_quality_filter([a, b], QualitySetting("high", self.THRESH))
        assert kept == [b]

    def test_unscored_kept_and_counted(self):
        kept, counts = apply_quality_filter([tr(GENE[0], "regulates", GENE[1])], QualitySetting("high", self.THRESH))
        assert len(kept) == 1 and counts["unscored"] == 1

    def test_missing_source(self):
        with pytest.raises(DataError, match="srcC"):
            apply_quality_filter([tr(GENE[0], "regulates", GENE[1], 0.5, "srcC")], QualitySetting("low", self.THRESH))

    @pytest.mark.parametrize("cut", [(0.3, 0.5, 0.7), (0.5, 0.5, 1.2), (0.5, 0.5)])
    def test_bad_thresholds(self, cut):
        with pytest.raises(ValueError):
            QualitySetting("high", {"s": cut})

    def test_threshold_file(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("# c\nsrcA\t0.7\t0.5\t0.3\n")
        assert read_thresholds(path) == {"srcA": (0.7, 0.5, 0.3)}
        path.write_text("srcA\t0.3\t0.5\t0.7\n")
        with pytest.raises(DataError, match=":1:"):
            read_thresholds(path)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.tuples(st.sampled_from(["srcA", "srcB"]), st.one_of(st.none(), st.floats(0, 1))), max_size=40),
        st.lists(st.floats(0, 1), min_size=6, max_size=6),
    )
    def test_monotone_levels(self, rows, cuts):
        thresholds = {"srcA": tuple(sorted(cuts[:3], reverse=True)), "srcB": tuple(sorted(cuts[3:], reverse=True))}
        triples = [tr(GENE[0], "regulates", GENE[1], q, s, timestamp=None)._replace(tail=EntityId("GENE", str(i), i))
                   for i, (s, q) in enumerate(rows)]
        out = [set(apply_quality_filter(triples, QualitySetting(level, thresholds))[0])
               for level in ("high", "medium", "low", "all")]
        assert out[0] <= out[1] <= out[2] <= out[3]


class TestSourceRelationFilter:
    TRIPLES = [
        tr(GENE[0], "causes", DIS[0], source="srcA"),
        tr(GENE[1], "causes", DIS[1], source="srcB"),
        tr(GENE[0], "associated", DIS[0], source="srcB"),
        tr(GENE[0], "regulates", GENE[1], source="srcA"),
        tr(GENE[2], "interacts", GENE[1], source="srcB"),
    ]

    def test_identity(self):
        kept, counts, unknown = filter_sources_and_relations(self.TRIPLES)
        assert kept == self.TRIPLES and not counts and not unknown

    def test_exclude_source(self):
        kept, counts, _ = filter_sources_and_relations(self.TRIPLES, {"srcA"})
        assert all(t.source != "srcA" for t in kept) and counts["source:srcA"] == 2

    def test_exclude_relation_hand_count(self):
        kept, counts, _ = filter_sources_and_relations(self.TRIPLES, (), {"causes"})
        assert len(kept) == 3

    def test_unknown_names_reported(self):
        kept, _, unknown = filter_sources_and_relations(self.TRIPLES, {"srcZ"}, {"nope"})
        assert kept == self.TRIPLES
        assert unknown == ["source:srcZ", "relation:nope"]


class TestDirectionality:
    A, B = GENE[0], GENE[1]

    def test_undirected_dedup(self):
        out = make_undirected([tr(self.A, "interacts", self.B), tr(self.B, "interacts", self.A)], SCHEMA)
        assert keys(out) == {(self.A, "interacts", self.B)}

    def test_undirected_canonicalises(self):
        assert keys(make_undirected([tr(self.B, "interacts", self.A)], SCHEMA)) == {(self.A, "interacts", self.B)}

    def test_undirected_non_symmetric_unchanged(self):
        triples = [tr(self.B, "regulates", self.A), tr(self.A, "regulates", self.B)]
        assert make_undirected(triples, SCHEMA) == triples

    def test_directed_adds_reverse(self):
        out = make_directed([tr(self.A, "interacts", self.B, 0.4, "srcB")], SCHEMA)
        assert keys(out) == {(self.A, "interacts", self.B), (self.B, "interacts", self.A)}
        assert {(t.quality, t.source) for t in out} == {(0.4, "srcB")}

    def test_directed_non_symmetric_unchanged(self):
        triples = [tr(self.A, "regulates", self.B)]
        assert make_directed(triples, SCHEMA) == triples

    def test_directed_self_loop(self):
        assert len(make_directed([tr(self.A, "interacts", self.A)], SCHEMA)) == 1

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.sampled_from(["interacts", "regulates"]), st.integers(0, 5)), max_size=500))
    def test_round_trip_and_closure(self, rows):
        triples = [tr(GENE[h], r, GENE[t]) for h, r, t in rows]
        directed = make_directed(triples, SCHEMA)
        present = keys(directed)
        for h, r, t in present:
            if SCHEMA[r].symmetric:
                assert (t, r, h) in present
        assert keys(make_undirected(directed, SCHEMA)) == keys(make_undirected(triples, SCHEMA))


class TestTrueNegatives:
    G, T = EntityId("GENE", "g", 0), EntityId("ANAT", "t", 1)

    def test_disjoint_pair(self):
        negs, conflicts = infer_true_negatives([tr(self.G, "over_expressed_in", self.T)], EXPR)
        assert [(t.spo, t.polarity, t.source) for t in negs] == [
            ((self.G, "under_expressed_in", self.T), Polarity.NEGATIVE, INFERRED_SOURCE)]
        assert conflicts == []

    def test_no_disjoint_relations(self):
        assert infer_true_negatives([tr(GENE[0], "regulates", GENE[1])], SCHEMA) == ([], [])

    def test_contradiction(self):
        pos = [tr(self.G, "over_expressed_in", self.T), tr(self.G, "under_expressed_in", self.T)]
        negs, conflicts = infer_true_negatives(pos, EXPR)
        assert negs == [] and len(conflicts) == 1

    def test_deduplicated(self):
        pos = [tr(self.G, "over_expressed_in", self.T, 0.2), tr(self.G, "over_expressed_in", self.T, 0.9)]
        assert len(infer_true_negatives(pos, EXPR)[0]) == 1

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_never_emits_a_positive(self, seed):
        rng = np.random.default_rng(seed)
        schema = random_schema(rng)
        triples, _ = parse_edges(random_edge_lines(rng, schema, 300, 4), schema)
        present = keys(triples)
        negs, _ = infer_true_negatives(triples, schema)
        assert not keys(negs) & present


class TestAssemble:
    def test_max_merge(self):
        a, b = GENE[0], GENE[1]
        g, report = assemble_graph([tr(a, "regulates", b, 0.4, "srcB"), tr(a, "regulates", b, 0.9, "srcA")], [], SCHEMA)
        assert len(g.positives) == 1
        assert (g.positives[0].quality, g.positives[0].source) == (0.9, "srcA")
        assert report.duplicates_merged == 1

    def test_merge_dates_and_unscored(self):
        a, b = GENE[0], GENE[1]
        early, late = dt.date(2001, 1, 1), dt.date(2005, 1, 1)
        merged, n = dedupe([tr(a, "regulates", b, None, "s", timestamp=late), tr(a, "regulates", b, 0.3, "s", timestamp=early)])
        assert n == 1 and merged[0].quality == 0.3 and merged[0].timestamp == early

    def test_additive(self):
        x = [tr(GENE[0], "regulates", GENE[1]), tr(GENE[1], "regulates", GENE[2])]
        y = [tr(GENE[3], "causes", DIS[0])]
        g, _ = assemble_graph(x + y, [], SCHEMA)
        assert len(g.positives) == len(x) + len(y)

    def test_conflict_positive_wins(self):
        a, b = GENE[0], GENE[1]
        neg = tr(a, "regulates", b, polarity=Polarity.NEGATIVE)
        g, report = assemble_graph([tr(a, "regulates", b)], [neg], SCHEMA)
        assert len(g.positives) == 1 and len(g.negatives) == 0
        assert len(report.conflicts) == 1

    def test_typing_violation_rejected(self):
        g, report = assemble_graph([tr(DIS[0], "regulates", GENE[0]), tr(GENE[0], "regulates", GENE[1])], [], SCHEMA)
        assert len(g.positives) == 1 and len(report.rejected) == 1

    def test_entities_keep_intern_order(self):
        g, _ = assemble_graph([tr(GENE[4], "regulates", GENE[2]), tr(GENE[3], "regulates", GENE[4])], [], SCHEMA)
        assert [e.local_id for e in g.entities] == ["2", "3", "4"]
        assert [e.index for e in g.entities] == [0, 1, 2]


class TestBuildGraph:
    def lines(self):
        return [
            edge_line("GENE:1", "interacts", "GENE:2", "0.9", "srcA"),
            edge_line("GENE:2", "interacts", "GENE:1", "0.2", "srcA"),
            edge_line("GENE:1", "causes", "DIS:1", "0.8", "srcB"),
            edge_line("GENE:1", "causes", "DIS:1", "0.85", "srcB"),
            edge_line("GENE:2", "prevents", "DIS:1", "-", "srcA"),
            edge_line("GENE:3", "associated", "DIS:2", "0.1", "srcA"),
            edge_line("GENE:3", "regulates", "GENE:1", "0.5", "srcA", polarity="-"),
        ]

    def test_report_accounting(self):
        raw, report = parse_edges(self.lines(), SCHEMA)
        options = GraphOptions(quality="high", thresholds={"srcA": (0.7, 0.5, 0.3), "srcB": (0.8, 0.6, 0.4)})
        g, report = build_graph(raw, SCHEMA, options, report)
        assert report.parsed == 7
        assert report.dropped == {"quality:srcA": 3}
        assert report.unscored == 1
        assert report.duplicates_merged == 1
        assert report.true_negatives_inferred == 2
        assert len(g.positives) == 3
        assert len(g.negatives) == 2

    def test_directed_variant(self):
        raw, _ = parse_edges(self.lines(), SCHEMA)
        g, _ = build_graph(raw, SCHEMA, GraphOptions(directed=True))
        ints = [t for t in g.positives if t.relation == "interacts"]
        assert len(ints) == 2

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["high", "medium", "low", "all"]), st.booleans())
    def test_accounting_fuzz(self, seed, level, directed):
        rng = np.random.default_rng(seed)
        schema = random_schema(rng)
        lines = random_edge_lines(rng, schema, 200, 5)
        lines += [edge_line("A:1", "nope", "A:2"), "broken"]
        raw, report = parse_edges(lines, schema)
        options = GraphOptions(level, {"srcA": (0.7, 0.5, 0.3)}, directed)
        g, report = build_graph(raw, schema, options, report)
        assert report.lines_read == report.parsed + len(report.errors) == len(lines)
        kept = report.parsed - sum(report.dropped.values())
        # every kept positive ends up in the graph, merged or mirrored
        assert len(keys(make_undirected([t for t in g.positives], schema))) <= kept
        assert not keys(g.negatives) & keys(g.positives)


class TestPersistence:
    def test_save_load_identical(self, tmp_path):
        rng = np.random.default_rng(5)
        raw, _ = parse_edges(random_edge_lines(rng, SCHEMA, 200, 12), SCHEMA)
        g, report = build_graph(raw, SCHEMA, GraphOptions())
        save_graph(g, tmp_path, report)
        h = load_graph(tmp_path)
        assert [str(e) for e in h.entities] == [str(e) for e in g.entities]
        assert np.array_equal(h.pos_ids, g.pos_ids) and np.array_equal(h.neg_ids, g.neg_ids)
        assert [t[:] for t in h.positives] == [t[:] for t in g.positives]
        assert (tmp_path / "ingest_report.tsv").exists()
        stats = dict(line.split("\t") for line in (tmp_path / "stats.tsv").read_text().splitlines())
        assert int(stats["triples"]) == len(g.positives)

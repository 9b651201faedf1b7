import io
from importlib import resources

import pytest

from kgbench.errors import DataError, SchemaError
from kgbench.schema import RelationDef, format_schema, parse_schema, read_schema, validate_schema

from _support import SCHEMA


def rel(name, domain="A", range_="A", **kw):
    return RelationDef(name, domain, range_, **kw)


class TestValidSchema:
    def test_default_relations(self):
        assert SCHEMA.names == ("interacts", "regulates", "regulated_by", "associated", "causes", "prevents")
        assert SCHEMA.node_types == ("GENE", "DIS")
        assert SCHEMA.index("causes") == 4

    def test_closure_is_transitive(self):
        s = validate_schema([rel("a"), rel("b", parents={"a"}), rel("c", parents={"b"}), rel("d", parents={"c", "a"})])
        assert s.ancestors("d") == {"a", "b", "c"}
        assert s.ancestors("a") == frozenset()
        assert s.descendants("a") == {"b", "c", "d"}
        assert s.descendants("d") == frozenset()

    def test_unknown_relation_lookup(self):
        with pytest.raises(SchemaError, match="unknown relation"):
            SCHEMA["nope"]
        with pytest.raises(SchemaError):
            SCHEMA.index("nope")

    def test_bundled_biomedical_schema(self):
        path = resources.files("kgbench") / "data" / "biomedical_schema.tsv"
        s = read_schema(str(path))
        assert len(s) == 30
        assert s.n_node_types == 7

    def test_format_parse_round_trip(self):
        again = parse_schema(io.StringIO(format_schema(SCHEMA)))
        assert again.relations == SCHEMA.relations
        assert again.node_types == SCHEMA.node_types


class TestInvalidSchema:
    @pytest.mark.parametrize(
        "relations, message",
        [
            ([rel("a"), rel("a")], "duplicate relation name"),
            ([rel("a", parents={"zzz"})], "unknown relation"),
            ([rel("a", "A", "B", symmetric=True)], "symmetric"),
            ([rel("a", inverse_of="b"), rel("b")], "non-mutual inverse"),
            ([rel("a", "A", "B", inverse_of="b"), rel("b", "A", "B", inverse_of="a")], "incompatible typing"),
            ([rel("a", disjoint_with={"a"})], "disjoint with itself"),
            ([rel("a", disjoint_with={"b"}), rel("b")], "non-mutual disjointness"),
            ([rel("a", disjoint_with={"b"}), rel("b", "A", "B", disjoint_with={"a"})], "different typing"),
            ([rel("a"), rel("b", "A", "B", parents={"a"})], "typing differs"),
            ([rel("a", parents={"b"}), rel("b", parents={"a"})], "cyclic hierarchy"),
            ([rel("a", parents={"a"})], "cyclic hierarchy"),
        ],
    )
    def test_rejected(self, relations, message):
        with pytest.raises(SchemaError, match=message):
            validate_schema(relations)

    def test_disjoint_with_ancestor(self):
        relations = [rel("a", disjoint_with={"c"}), rel("b", parents={"a"}), rel("c", parents={"b"}, disjoint_with={"a"})]
        with pytest.raises(SchemaError, match="disjoint with its ancestor 'a'"):
            validate_schema(relations)

    def test_cycle_is_named(self):
        with pytest.raises(SchemaError) as info:
            validate_schema([rel("x", parents={"y"}), rel("y", parents={"z"}), rel("z", parents={"x"})])
        msg = str(info.value)
        assert "->" in msg and all(n in msg for n in "xyz")

    @pytest.mark.parametrize("bad", ["has space", "", "a\tb"])
    def test_bad_relation_names(self, bad):
        with pytest.raises(SchemaError):
            validate_schema([rel(bad)])


class TestSchemaFile:
    def test_wrong_column_count_reports_line(self):
        text = "# comment\ninteracts\tGENE\tGENE\t1\t-\t-\n"
        with pytest.raises(DataError) as info:
            parse_schema(io.StringIO(text), "s.tsv")
        assert "s.tsv:2" in str(info.value)

    def test_bad_symmetric_flag(self):
        with pytest.raises(DataError, match="symmetric flag"):
            parse_schema(["r\tA\tA\tyes\t-\t-\t-\n"])

    def test_multi_valued_columns(self):
        s = parse_schema(["a\tA\tA\t0\t-\t-\tb\n", "b\tA\tA\t0\t-\t-\ta\n", "c\tA\tA\t0\t-\ta,b\t-\n"])
        assert s["c"].parents == {"a", "b"}
        assert s["a"].disjoint_with == {"b"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read schema"):
            read_schema(tmp_path / "missing.tsv")

    def test_validation_error_carries_path(self, tmp_path):
        path = tmp_path / "schema.tsv"
        path.write_text("a\tA\tB\t1\t-\t-\t-\n")
        with pytest.raises(SchemaError, match="schema.tsv"):
            read_schema(path)

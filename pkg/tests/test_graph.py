import pytest

from stablespec.graph import (
    ARROW, CIRCLE, TAIL, Edge, GraphError, MixedGraph,
    REMOVE_INTO, REMOVE_VISIBLE_OUT_OF,
    bidirected, circle_arrow, directed, mutilate, parse,
    possible_ancestors, serialize,
)
from util import ADMG_TEXT, PAG_TEXT, example_admg, example_pag


class TestConstruction:
    def test_self_loop_rejected(self):
        with pytest.raises(GraphError):
            Edge("A", "A", TAIL, ARROW)

    def test_unknown_vertex_in_edge(self):
        with pytest.raises(GraphError):
            MixedGraph(["A"], [directed("A", "B")], "ADMG")

    def test_circle_mark_rejected_in_mag(self):
        with pytest.raises(GraphError):
            MixedGraph(["A", "B"], [circle_arrow("A", "B")], "MAG")

    def test_directed_cycle_rejected(self):
        with pytest.raises(GraphError):
            MixedGraph(["A", "B"], [directed("A", "B"), directed("B", "A")],
                       "ADMG")

    def test_parallel_edges_rejected_in_mag(self):
        with pytest.raises(GraphError):
            MixedGraph(["A", "B"], [directed("A", "B"), bidirected("A", "B")],
                       "MAG")

    def test_admg_allows_directed_plus_bidirected(self):
        g = MixedGraph(["A", "B"], [directed("A", "B"), bidirected("A", "B")],
                       "ADMG")
        assert len(g.edges_between("A", "B")) == 2

    def test_duplicate_directed_rejected_in_admg(self):
        with pytest.raises(GraphError):
            MixedGraph(["A", "B"], [directed("A", "B"), directed("A", "B")],
                       "ADMG")

    def test_circle_rejected_in_admg(self):
        with pytest.raises(GraphError):
            MixedGraph(["A", "B"], [circle_arrow("A", "B")], "ADMG")

    def test_equality_ignores_edge_order(self):
        e1, e2 = directed("A", "B"), bidirected("B", "C")
        g1 = MixedGraph(["A", "B", "C"], [e1, e2], "MAG")
        g2 = MixedGraph(["A", "B", "C"], [e2, e1], "MAG")
        assert g1 == g2 and hash(g1) == hash(g2)


class TestTextFormat:
    def test_round_trip_is_byte_stable(self):
        for text, kind in ((PAG_TEXT, "PAG"), (ADMG_TEXT, "ADMG")):
            g = parse(text, kind)
            assert serialize(g) == text
            assert parse(serialize(g), kind) == g

    def test_reversed_glyphs_parse(self):
        g = parse("vars: A,B\nB <-- A\n", "ADMG")
        assert g.edge("A", "B") == directed("A", "B")

    def test_missing_header(self):
        with pytest.raises(GraphError):
            parse("A --> B\n")

    def test_bad_edge_line(self):
        with pytest.raises(GraphError):
            parse("vars: A,B\nA -> B\n")


class TestBasicQueries:
    def test_parents_children(self):
        g = example_admg()
        assert g.parents("X2") == {"X1", "Y"}
        assert g.children("E") == {"X1"}
        assert g.parents("E") == set()

    def test_ancestors_reflexive_closure(self):
        g = example_admg()
        assert g.ancestors({"X2"}) == {"E", "X1", "X2", "X3", "Y"}
        assert g.ancestors({"X3"}) == {"X3"}

    def test_possible_parents_and_children_on_pag(self):
        p = example_pag()
        assert p.possible_parents("X1") == {"E"}
        assert p.possible_children("E") == {"X1"}
        assert p.possible_parents("X2") == {"X1", "Y"}


class TestPossibleAncestors:
    def test_running_example_sink(self):
        p = example_pag()
        assert possible_ancestors(p, {"X2"}) == {"E", "X1", "X2", "X3", "Y"}

    def test_running_example_source(self):
        p = example_pag()
        assert possible_ancestors(p, {"X3"}) == {"X3"}

    def test_reflexive_on_edgeless_graph(self):
        g = MixedGraph(["V"], [], "PAG")
        assert possible_ancestors(g, {"V"}) == {"V"}

    def test_unknown_vertex(self):
        with pytest.raises(GraphError):
            possible_ancestors(example_pag(), {"Q"})

    def test_circle_edges_walkable_both_ways(self):
        g = parse("vars: A,B,C\nA o-o B\nB o-> C\n", "PAG")
        assert possible_ancestors(g, {"C"}) == {"A", "B", "C"}
        assert possible_ancestors(g, {"A"}) == {"A", "B"}


class TestMutilate:
    def test_remove_into_empty_is_identity(self):
        g = example_admg()
        assert mutilate(g, REMOVE_INTO, set()) == g

    def test_remove_into_strips_all_arrowheads_at_x(self):
        from stablespec.separation import mag_of_admg
        mag = mag_of_admg(example_admg())
        cut = mutilate(mag, REMOVE_INTO, {"X1"})
        assert not cut.adjacent("E", "X1")
        assert not cut.adjacent("X1", "Y")
        assert cut.adjacent("X1", "X2")
        for e in cut.edges:
            assert not (e.mark_at("X1") == ARROW if "X1" in (e.a, e.b) else False)

    def test_remove_visible_out_of(self):
        from stablespec.separation import mag_of_admg
        mag = mag_of_admg(example_admg())
        cut = mutilate(mag, REMOVE_VISIBLE_OUT_OF, {"Y"})
        assert not cut.adjacent("Y", "X2")
        assert cut.adjacent("X3", "Y")
        assert cut.adjacent("X1", "Y")

    def test_visibility_judged_in_other_graph(self):
        # In the MAG alone Y --> X2 is still visible (witness X3 --> Y), so
        # passing the PAG as the visibility reference gives the same cut.
        from stablespec.separation import mag_of_admg
        mag = mag_of_admg(example_admg())
        cut = mutilate(mag, REMOVE_VISIBLE_OUT_OF, {"Y"},
                       visibility_in=example_pag())
        assert not cut.adjacent("Y", "X2")

    def test_unknown_mode(self):
        with pytest.raises(GraphError):
            mutilate(example_admg(), "Shuffle", set())

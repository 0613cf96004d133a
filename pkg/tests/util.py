"""Shared fixtures and random-graph generators for the test suite."""

from stablespec.graph import ARROW, TAIL, Edge, MixedGraph, parse

# Running example: a five-variable system with one latent confounder.
# The PAG below is what structure learning recovers for the ADMG further
# down; both are frozen fixtures used throughout the suite.

PAG_TEXT = """\
vars: E,X1,X2,X3,Y
E o-> X1
X1 --> X2
X1 <-> Y
X3 o-> Y
Y --> X2
"""

ADMG_TEXT = """\
vars: E,X1,X2,X3,Y
E --> X1
X1 --> X2
X1 <-> Y
X3 --> Y
Y --> X2
"""


def example_pag() -> MixedGraph:
    return parse(PAG_TEXT, "PAG")


def example_admg() -> MixedGraph:
    return parse(ADMG_TEXT, "ADMG")


def random_admg(rng, max_vertices: int = 7, min_vertices: int = 2,
                p_directed: float = 0.25, p_bidirected: float = 0.15,
                p_both: float = 0.1) -> MixedGraph:
    """Random ADMG; direction always low index to high index, so acyclic."""
    n = rng.randint(min_vertices, max_vertices)
    names = [f"V{i}" for i in range(n)]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            r = rng.random()
            if r < p_directed:
                edges.append(Edge(names[i], names[j], TAIL, ARROW))
            elif r < p_directed + p_bidirected:
                edges.append(Edge(names[i], names[j], ARROW, ARROW))
            elif r < p_directed + p_bidirected + p_both:
                edges.append(Edge(names[i], names[j], TAIL, ARROW))
                edges.append(Edge(names[i], names[j], ARROW, ARROW))
    return MixedGraph(names, edges, "ADMG")

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalids.errors import (
    InvalidParameters,
    ResourceLimit,
    ScaleOrderViolation,
    TooFewEssentialFixedPoints,
    VertexOutsideWindow,
)
from fractalids.geometry import (
    SimilitudeSystem,
    build_fractal_system,
    builtin_system,
    lindstrom_snowflake,
    sierpinski_gasket,
    unit_segment,
)


def exact_gasket_vertices(M):
    """Vertex count of the gasket window of size 2^M from exact lattice arithmetic.

    Lattice basis (1, 0), (1/2, sqrt(3)/2): the unit triangle has corners
    (0,0), (1,0), (0,1) and the maps are x/2 + {(0,0), (1/2,0), (0,1/2)}.
    """
    half = Fraction(1, 2)
    shifts = [(Fraction(0), Fraction(0)), (half, Fraction(0)), (Fraction(0), half)]
    cells = [((Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))]
    for _ in range(M):
        cells = [tuple((x / 2 + sx, y / 2 + sy) for x, y in c) for sx, sy in shifts for c in cells]
    return len({p for c in cells for p in c})


def test_gasket_constants(gasket):
    assert gasket.k == 3
    assert gasket.N == 3
    assert gasket.d == pytest.approx(np.log(3) / np.log(2))
    assert gasket.d == pytest.approx(1.58496, abs=1e-5)
    assert gasket.r_0 == 2
    assert gasket.corner_ranks == (1, 2, 2)
    assert gasket.d_w is None and gasket.d_s is None


def test_essential_points_form_regular_triangle(gasket):
    p = gasket.essential_fixed_points
    sides = [np.linalg.norm(p[i] - p[(i + 1) % 3]) for i in range(3)]
    np.testing.assert_allclose(sides, 1.0, atol=1e-12)
    np.testing.assert_allclose(p[0], 0.0, atol=1e-15)


@pytest.mark.parametrize("M", [1, 2, 3, 4, 5])
def test_gasket_vertex_counts(gasket, M):
    n = gasket.build_graph(M, 0).n_vertices
    assert n == 3 * (3**M + 1) // 2
    if M <= 4:
        assert n == exact_gasket_vertices(M)


def test_segment_rejected():
    with pytest.raises(TooFewEssentialFixedPoints):
        build_fractal_system(unit_segment())


def test_snowflake_hexagon_connected():
    s = build_fractal_system(lindstrom_snowflake(), validation_depth=2)
    assert s.k == 6
    assert s.build_graph(1, 0).is_connected()
    p = s.essential_fixed_points
    sides = [np.linalg.norm(p[i] - p[(i + 1) % 6]) for i in range(6)]
    np.testing.assert_allclose(sides, sides[0], rtol=1e-9)


def test_vicsek_constants(vicsek):
    assert vicsek.k == 4
    assert vicsek.corner_ranks == (1, 1, 2, 1)


def test_invalid_specs():
    with pytest.raises(InvalidParameters):
        build_fractal_system(SimilitudeSystem(1.0, ((0.0, 0.0), (0.5, 0.0))))
    with pytest.raises(InvalidParameters):
        build_fractal_system(sierpinski_gasket(), validation_depth=0)
    with pytest.raises(InvalidParameters):
        builtin_system("no-such-fractal")


def test_similitude_round_trip():
    s = sierpinski_gasket()
    assert SimilitudeSystem.from_dict(s.to_dict()) == s


def test_enumerate_cells(gasket):
    assert len(gasket.enumerate_cells(2, 0)) == 9
    one = gasket.enumerate_cells(1, 1)
    assert len(one) == 1 and one[0].word == ()
    first = gasket.enumerate_cells(3, 0)[0]
    assert first.word == (1, 1, 1)
    assert first.base_point == (0.0, 0.0)
    with pytest.raises(ScaleOrderViolation):
        gasket.enumerate_cells(0, 1)


@pytest.mark.parametrize("M,m", [(2, 0), (3, 1), (1, -2)])
def test_cell_count_and_vertex_bounds(gasket, M, m):
    assert len(gasket.enumerate_cells(M, m)) == 3 ** (M - m)
    lo, hi = gasket.vertex_count_bounds(M, m)
    n = gasket.build_graph(M, m).n_vertices
    assert lo <= n <= hi


def test_cell_vertices(gasket):
    from fractalids.geometry import CellAddress

    prim = gasket.cell_vertices(CellAddress(0, 0, ()))
    np.testing.assert_allclose([v.coordinates for v in prim], gasket.essential_fixed_points, atol=1e-12)
    second = gasket.cell_vertices(CellAddress(0, 1, (2,)))
    shift = 2 * np.array(sierpinski_gasket().nu[1])
    np.testing.assert_allclose([v.coordinates for v in second], gasket.essential_fixed_points + shift, atol=1e-12)
    first = gasket.cell_vertices(CellAddress(0, 1, (1,)))
    shared = {v.index for v in first} & {v.index for v in second}
    assert len(shared) == 1
    v = gasket.build_graph(1, 0).vertex(shared.pop())
    assert v.rank == 2
    assert {c.word for c in v.incident_cells} == {(1,), (2,)}


def test_small_graphs(gasket):
    g = gasket.build_graph(1, 0)
    assert g.n_vertices == 6
    assert gasket.build_graph(2, 0).n_vertices == 15
    one = gasket.build_graph(0, 0)
    A = one.vertex_adjacency.toarray()
    np.testing.assert_array_equal(A, np.ones((3, 3)) - np.eye(3))
    # edges are exactly the pairs co-resident in a cell
    pairs = set()
    for row in g.cell_vertex:
        pairs |= {(min(a, b), max(a, b)) for a in row for b in row if a != b}
    A1 = g.vertex_adjacency.toarray()
    assert {(i, j) for i, j in zip(*np.nonzero(np.triu(A1)))} == pairs


def test_graph_distance_examples(gasket):
    g = gasket.build_graph(1, 0)
    c = g.corners
    assert gasket.graph_distance(c[0], c[0], 0, 1) == 0
    one = gasket.build_graph(0, 0)
    assert one.distance(0, 1) == 1
    assert gasket.graph_distance(g.points[c[0]], g.points[c[1]], 0, 1) == 2
    assert gasket.graph_distance(c[1], c[2], 0, 1) == 2


def test_distance_outside_window(gasket):
    with pytest.raises(VertexOutsideWindow):
        gasket.graph_distance((0.3, 0.1), (0.0, 0.0), 0, 1)
    with pytest.raises(VertexOutsideWindow):
        gasket.build_graph(1, 0).resolve(10_000)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_metric_axioms(gasket, data):
    g = gasket.build_graph(3, 0)
    n = g.n_vertices
    x, y, z = (data.draw(st.integers(0, n - 1)) for _ in range(3))
    dxy, dyx = g.distance(x, y), g.distance(y, x)
    assert dxy == dyx
    assert (dxy == 0) == (x == y)
    assert g.distance(x, z) <= dxy + g.distance(y, z)


def test_neighborhood(gasket):
    g = gasket.build_graph(1, 0)
    mid = int(np.nonzero(g.ranks == 2)[0][0])
    cells, rank = gasket.neighborhood(mid, 0, 1)
    assert rank == 2 and len(cells) == 2
    for c in g.corners:
        assert gasket.neighborhood(int(c), 0, 1)[1] == 1
    assert g.ranks.max() <= gasket.r_0


def test_adjacency_symmetric_and_connected(gasket):
    for M, m in [(2, 0), (3, 0), (1, -1)]:
        g = gasket.build_graph(M, m)
        assert abs(g.cell_adjacency - g.cell_adjacency.T).max() == 0
        assert abs(g.vertex_adjacency - g.vertex_adjacency.T).max() == 0
        assert g.is_connected()


def test_vertex_ids_stable_under_rebuild(gasket):
    fresh = build_fractal_system(sierpinski_gasket(), validation_depth=3)
    a, b = gasket.build_graph(3, 0), fresh.build_graph(3, 0)
    np.testing.assert_array_equal(a.cell_vertex, b.cell_vertex)
    np.testing.assert_array_equal(a.points, b.points)


def test_window_is_prefix_of_larger_window(gasket):
    small, big = gasket.build_graph(2, 0), gasket.build_graph(3, 0)
    np.testing.assert_allclose(big.points[: small.n_vertices], small.points, atol=1e-12)
    np.testing.assert_array_equal(big.cell_vertex[: small.n_cells], small.cell_vertex)


def test_negative_resolution(gasket):
    g = gasket.build_graph(0, -2)
    assert g.n_vertices == 15
    np.testing.assert_allclose(g.points * 4, gasket.build_graph(2, 0).points, atol=1e-12)


def test_resource_cap():
    s = build_fractal_system(sierpinski_gasket(), validation_depth=2, max_points=100)
    with pytest.raises(ResourceLimit):
        s.build_graph(6, 0)


def test_csv_exports(gasket):
    g = gasket.build_graph(2, 0)
    vrows = g.vertex_csv().strip().splitlines()
    assert vrows[0] == "id,x,y,rank"
    assert len(vrows) - 1 == g.n_vertices
    erows = g.edge_csv().strip().splitlines()
    assert erows[0] == "src,dst"
    assert len(erows) - 1 == g.vertex_adjacency.nnz // 2


def test_locate_round_trip(gasket):
    g = gasket.build_graph(2, 0)
    np.testing.assert_array_equal(g.locate(g.points), np.arange(g.n_vertices))
    v = g.vertex(4)
    assert g.resolve(v) == 4

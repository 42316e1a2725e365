"""Planar nested fractals built from similitude systems.

A fractal is given by N maps Psi_i(x) = U x / L + nu_i with a common ratio
1/L and a common isometry U.  Everything downstream works with windows:
the set K<M> = L^M K<0> tiled by N^(M-m) complexes of size L^m.  A complex
is identified by its word (i_M, ..., i_{m+1}), most significant digit first,
and its corners are L^M Psi_{i_M} o ... o Psi_{i_{m+1}}(p_j), where p_j are
the essential fixed points of the system.

Vertices of different cells are identified by coordinate coincidence with a
KD-tree at a relative tolerance of 1e-9, which is far below the smallest
vertex separation of any window this package can hold in memory.
"""
from __future__ import annotations

import io
import threading
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import (
    AxiomViolation,
    InvalidParameters,
    NotConnected,
    ResourceLimit,
    ScaleOrderViolation,
    TooFewEssentialFixedPoints,
    VertexOutsideWindow,
)

COORD_TOL = 1e-9
DEFAULT_MAX_POINTS = 5_000_000


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class SimilitudeSystem:
    """N similitudes sharing a scale factor L and an isometry U.

    ``angle`` and ``reflect`` describe U: a rotation by ``angle`` applied
    after an optional reflection in the x-axis.
    """

    L: float
    translations: tuple
    angle: float = 0.0
    reflect: bool = False
    name: str = "custom"

    def __post_init__(self):
        nu = tuple(tuple(float(c) for c in v) for v in self.translations)
        object.__setattr__(self, "translations", nu)

    @property
    def N(self):
        return len(self.translations)

    @property
    def nu(self):
        return np.array(self.translations, dtype=float).reshape(-1, 2)

    @property
    def U(self):
        R = _rotation(self.angle)
        if self.reflect:
            R = R @ np.diag([1.0, -1.0])
        return R

    @property
    def is_translational(self):
        return np.allclose(self.U, np.eye(2), atol=1e-14)

    def apply(self, i, x):
        """Psi_i applied to an array of points with trailing dimension 2."""
        x = np.asarray(x, dtype=float)
        return x @ self.U.T / self.L + self.nu[i]

    def fixed_points(self):
        A = np.eye(2) - self.U / self.L
        return np.linalg.solve(A, self.nu.T).T

    def to_dict(self):
        return {
            "L": self.L,
            "translations": [list(v) for v in self.translations],
            "angle": self.angle,
            "reflect": self.reflect,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            L=float(data["L"]),
            translations=tuple(tuple(v) for v in data["translations"]),
            angle=float(data.get("angle", 0.0)),
            reflect=bool(data.get("reflect", False)),
            name=str(data.get("name", "custom")),
        )


def sierpinski_gasket():
    h = np.sqrt(3.0) / 4.0
    return SimilitudeSystem(2.0, ((0.0, 0.0), (0.5, 0.0), (0.25, h)), name="sierpinski-gasket")


def vicsek_set():
    t = 2.0 / 3.0
    nu = ((0.0, 0.0), (t, 0.0), (t, t), (0.0, t), (1 / 3, 1 / 3))
    return SimilitudeSystem(3.0, nu, name="vicsek")


def lindstrom_snowflake():
    """Seven hexagons of ratio 1/3; the hexagon has a corner at the origin."""
    C = np.array([1.0, 0.0])
    centres = []
    for j in range(6):
        theta = np.pi + j * np.pi / 3.0
        centres.append(C + (2.0 / 3.0) * np.array([np.cos(theta), np.sin(theta)]))
    centres.append(C)
    nu = tuple(tuple(c - C / 3.0) for c in centres)
    nu = tuple((0.0, 0.0) if np.allclose(v, 0.0, atol=1e-15) else v for v in nu)
    return SimilitudeSystem(3.0, nu, name="lindstrom-snowflake")


def unit_segment():
    return SimilitudeSystem(2.0, ((0.0, 0.0), (0.5, 0.0)), name="segment")


BUILTINS = {
    "sierpinski-gasket": sierpinski_gasket,
    "vicsek": vicsek_set,
    "lindstrom-snowflake": lindstrom_snowflake,
    "segment": unit_segment,
}


def builtin_system(name):
    try:
        return BUILTINS[name]()
    except KeyError:
        raise InvalidParameters(f"unknown builtin fractal {name!r}; known: {sorted(BUILTINS)}")


@dataclass(frozen=True)
class CellAddress:
    """An m-complex inside the window K<M>.

    ``word`` holds 1-based digits, most significant first, of length M - m.
    """

    m: int
    M: int
    word: tuple
    base_point: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class VertexId:
    index: int
    coordinates: tuple
    M: int
    m: int
    incident_cells: tuple
    rank: int


def _dedupe(points, tol):
    """Canonical ids for points equal within ``tol``, numbered by first occurrence."""
    n = len(points)
    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    if len(pairs):
        g = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, lab = csgraph.connected_components(g, directed=False)
    else:
        lab = np.arange(n)
    _, first = np.unique(lab, return_index=True)
    order = np.argsort(first)
    remap = np.empty(len(order), dtype=np.int64)
    remap[order] = np.arange(len(order))
    ids = remap[lab]
    return ids, points[np.sort(first)]


@dataclass(eq=False)
class ApproxGraph:
    """The m-grid of the window K<M> with cell and vertex adjacency."""

    system: "FractalSystem"
    M: int
    m: int
    points: np.ndarray
    cell_words: np.ndarray
    cell_vertex: np.ndarray
    base_points: np.ndarray
    ranks: np.ndarray
    vertex_adjacency: sparse.csr_matrix
    cell_adjacency: sparse.csr_matrix
    corners: np.ndarray
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def J(self):
        return self.M - self.m

    @property
    def n_vertices(self):
        return len(self.points)

    @property
    def n_cells(self):
        return len(self.cell_vertex)

    @property
    def corner_set(self):
        return [self.vertex(i) for i in self.corners]

    @property
    def incidence(self):
        """Cell-by-vertex 0/1 matrix."""
        if "inc" not in self._cache:
            C, k = self.cell_vertex.shape
            rows = np.repeat(np.arange(C), k)
            inc = sparse.csr_matrix(
                (np.ones(C * k), (rows, self.cell_vertex.ravel())), shape=(C, self.n_vertices)
            )
            self._cache["inc"] = inc
        return self._cache["inc"]

    @property
    def tree(self):
        if "tree" not in self._cache:
            self._cache["tree"] = cKDTree(self.points)
        return self._cache["tree"]

    @property
    def degrees(self):
        return np.asarray(self.vertex_adjacency.sum(axis=1)).ravel().astype(np.int64)

    def cells_of(self, v):
        return self.incidence[:, v].nonzero()[0]

    def address(self, c):
        w = tuple(int(d) + 1 for d in self.cell_words[c])
        return CellAddress(self.m, self.M, w, tuple(self.base_points[c]))

    def cell_index(self, addr):
        if addr.M != self.M or addr.m != self.m or len(addr.word) != self.J:
            raise VertexOutsideWindow(f"{addr} is not a cell of window ({self.M}, {self.m})")
        idx = 0
        N = self.system.N
        for d in addr.word:
            if not 1 <= d <= N:
                raise VertexOutsideWindow(f"digit {d} outside 1..{N}")
            idx = idx * N + (d - 1)
        return idx

    def vertex(self, i):
        i = int(i)
        cells = tuple(self.address(c) for c in self.cells_of(i))
        return VertexId(i, tuple(self.points[i]), self.M, self.m, cells, int(self.ranks[i]))

    def locate(self, x, tol=None):
        """Index of the grid vertex at coordinates ``x``."""
        x = np.asarray(x, dtype=float)
        scale = self.system.L ** self.M
        tol = COORD_TOL * max(scale, 1.0) if tol is None else tol
        dist, idx = self.tree.query(x)
        if np.any(np.atleast_1d(dist) > tol):
            raise VertexOutsideWindow(f"point {x.tolist()} is not a vertex of this grid")
        return idx

    def resolve(self, x):
        if isinstance(x, VertexId):
            if x.M != self.M or x.m != self.m:
                raise VertexOutsideWindow("vertex belongs to a different window")
            return x.index
        if isinstance(x, (int, np.integer)):
            if not 0 <= x < self.n_vertices:
                raise VertexOutsideWindow(f"vertex index {x} out of range")
            return int(x)
        return int(self.locate(x))

    def distances_from(self, i):
        return csgraph.shortest_path(self.vertex_adjacency, unweighted=True, indices=[i])[0]

    def distance_matrix(self):
        if "dist" not in self._cache:
            if self.n_vertices > 6000:
                raise ResourceLimit("distance matrix limited to 6000 vertices")
            d = csgraph.shortest_path(self.vertex_adjacency, unweighted=True)
            self._cache["dist"] = d.astype(np.int64)
        return self._cache["dist"]

    def distance(self, x, y):
        i, j = self.resolve(x), self.resolve(y)
        if self.n_vertices <= 6000:
            return int(self.distance_matrix()[i, j])
        return int(self.distances_from(i)[j])

    def is_connected(self):
        n, _ = csgraph.connected_components(self.vertex_adjacency, directed=False)
        return n == 1

    def edge_csv(self):
        a = sparse.triu(self.vertex_adjacency, k=1).tocoo()
        order = np.lexsort((a.col, a.row))
        buf = io.StringIO()
        buf.write("src,dst\n")
        for r, c in zip(a.row[order], a.col[order]):
            buf.write(f"{r},{c}\n")
        return buf.getvalue()

    def vertex_csv(self):
        buf = io.StringIO()
        buf.write("id,x,y,rank\n")
        for i, (p, r) in enumerate(zip(self.points, self.ranks)):
            buf.write(f"{i},{p[0]:.12g},{p[1]:.12g},{r}\n")
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class FractalSystem:
    """A validated nested fractal with its derived constants."""

    similitudes: SimilitudeSystem
    essential_fixed_points: np.ndarray
    validation_depth: int
    d_w: float | None = None
    r_0: int = 0
    C_0: float = 0.0
    corner_ranks: tuple = ()
    report: dict = field(default_factory=dict)
    max_points: int = DEFAULT_MAX_POINTS
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def N(self):
        return self.similitudes.N

    @property
    def L(self):
        return self.similitudes.L

    @property
    def k(self):
        return len(self.essential_fixed_points)

    @property
    def d(self):
        return np.log(self.N) / np.log(self.L)

    @property
    def d_s(self):
        if self.d_w is None:
            return None
        return 2.0 * self.d / self.d_w

    @property
    def name(self):
        return self.similitudes.name

    @property
    def barycenter(self):
        return self.essential_fixed_points.mean(axis=0)

    @property
    def c1_geom(self):
        """Number of extra neighbouring cells attached at the corners of a complex."""
        return self.k * (max(self.corner_ranks) - 1)

    def with_walk_dimension(self, d_w):
        new = replace(self, d_w=float(d_w), _cache={}, _lock=threading.Lock())
        return new

    # -- cells ---------------------------------------------------------------

    def _unit_cells(self, J):
        """Corners of all J-level cells of K<0>, shape (N^J, k, 2)."""
        key = ("unit", J)
        if key in self._cache:
            return self._cache[key]
        if self.N ** J * self.k > self.max_points:
            raise ResourceLimit(f"{self.N ** J} cells exceed the point cap {self.max_points}")
        cells = self.essential_fixed_points[None, :, :]
        for _ in range(J):
            cells = np.concatenate([self.similitudes.apply(i, cells) for i in range(self.N)])
        self._cache[key] = cells
        return cells

    def _words(self, J):
        idx = np.arange(self.N ** J)
        digits = np.empty((len(idx), J), dtype=np.int64)
        for pos in range(J - 1, -1, -1):
            digits[:, pos] = idx % self.N
            idx = idx // self.N
        return digits

    def enumerate_cells(self, M, m):
        if m > M:
            raise ScaleOrderViolation(f"m={m} > M={M}")
        g = self.build_graph(M, m)
        return [g.address(c) for c in range(g.n_cells)]

    def cell_vertices(self, addr):
        g = self.build_graph(addr.M, addr.m)
        c = g.cell_index(addr)
        return [g.vertex(v) for v in g.cell_vertex[c]]

    def build_graph(self, M, m):
        if m > M:
            raise ScaleOrderViolation(f"m={m} > M={M}")
        key = ("graph", M, m)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        J = M - m
        unit = self._unit_cells(J)
        C, k, _ = unit.shape
        flat = unit.reshape(-1, 2)
        ids, reps = _dedupe(flat, COORD_TOL)
        scale = self.L ** M
        points = reps * scale
        cell_vertex = ids.reshape(C, k)
        nV = len(points)
        base = np.zeros((1, 1, 2))
        for _ in range(J):
            base = np.concatenate([self.similitudes.apply(i, base) for i in range(self.N)])
        base_points = base.reshape(-1, 2) * scale
        rows = np.repeat(np.arange(C), k)
        inc = sparse.csr_matrix((np.ones(C * k), (rows, cell_vertex.ravel())), shape=(C, nV))
        ranks = np.asarray(inc.sum(axis=0)).ravel().astype(np.int64)
        ii, jj = np.triu_indices(k, 1)
        src = cell_vertex[:, ii].ravel()
        dst = cell_vertex[:, jj].ravel()
        adj = sparse.coo_matrix(
            (np.ones(2 * len(src)), (np.r_[src, dst], np.r_[dst, src])), shape=(nV, nV)
        ).tocsr()
        adj.data[:] = 1.0
        adj.setdiag(0)
        adj.eliminate_zeros()
        cadj = (inc @ inc.T).tocsr()
        cadj.setdiag(0)
        cadj.eliminate_zeros()
        cadj.data[:] = 1.0
        tree = cKDTree(points)
        _, corners = tree.query(self.essential_fixed_points * scale)
        g = ApproxGraph(
            system=self,
            M=M,
            m=m,
            points=points,
            cell_words=self._words(J),
            cell_vertex=cell_vertex,
            base_points=base_points,
            ranks=ranks,
            vertex_adjacency=adj,
            cell_adjacency=cadj,
            corners=np.asarray(corners, dtype=np.int64),
        )
        g._cache["tree"] = tree
        with self._lock:
            self._cache.setdefault(key, g)
            return self._cache[key]

    def graph_distance(self, x, y, m, M):
        return self.build_graph(M, m).distance(x, y)

    def neighborhood(self, x, m, M):
        g = self.build_graph(M, m)
        i = g.resolve(x)
        cells = frozenset(g.address(c) for c in g.cells_of(i))
        return cells, int(g.ranks[i])

    def vertex_count_bounds(self, M, m):
        n = float(self.N) ** (M - m)
        return n, self.C_0 * n


def _essential_points(sim, tol):
    F = sim.fixed_points()
    N = sim.N
    images = np.stack([sim.apply(i, F) for i in range(N)])  # (i, fixed pt, 2)
    flat = images.reshape(-1, 2)
    tree = cKDTree(flat)
    essential = []
    for a in range(N):
        for i in range(N):
            hits = tree.query_ball_point(images[i, a], tol)
            if any((h // N) != i for h in hits):
                essential.append(a)
                break
    pts = F[sorted(set(essential))]
    if len(pts):
        ids, pts = _dedupe(pts, tol)
    return pts


def _order_polygon(pts):
    """Sort polygon vertices counter-clockwise, starting from the one nearest the origin."""
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    order = np.argsort(ang)
    pts = pts[order]
    start = int(np.argmin(np.linalg.norm(pts, axis=1)))
    return np.roll(pts, -start, axis=0)


def _check_regular_polygon(pts, tol):
    k = len(pts)
    c = pts.mean(axis=0)
    r = np.linalg.norm(pts - c, axis=1)
    if np.ptp(r) > tol * max(r.max(), 1.0):
        raise AxiomViolation("polygon", "essential fixed points are not concyclic")
    ang = np.unwrap(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))
    steps = np.diff(np.r_[ang, ang[0] + 2 * np.pi])
    if not np.allclose(steps, 2 * np.pi / k, atol=1e-7):
        raise AxiomViolation("polygon", "essential fixed points are not equally spaced")


def _cell_keys(cells, scale):
    q = np.round(cells * scale).astype(np.int64)
    return {tuple(sorted(map(tuple, c))) for c in q}


def _check_symmetry(system, depth):
    p = system.essential_fixed_points
    k = len(p)
    scale = 1e8
    for n in range(1, depth + 1):
        cells = system._unit_cells(n)
        keys = _cell_keys(cells, scale)
        for a in range(k):
            for b in range(a + 1, k):
                u = p[b] - p[a]
                u = u / np.linalg.norm(u)
                mid = (p[a] + p[b]) / 2
                refl = cells - 2.0 * ((cells - mid) @ u)[..., None] * u
                if _cell_keys(refl, scale) != keys:
                    raise AxiomViolation("symmetry", f"reflection swapping corners {a},{b} fails at level {n}")


def _check_nesting(system, depth):
    g = system.build_graph(0, -depth)
    first = g.cell_words[:, 0]
    top = system.build_graph(0, -1)
    inc = g.incidence.tocsc()
    for v in range(g.n_vertices):
        cs = inc[:, v].indices
        digits = np.unique(first[cs])
        if len(digits) < 2:
            continue
        tv = np.linalg.norm(top.points - g.points[v], axis=1) < COORD_TOL
        if not tv.any():
            raise AxiomViolation("nesting", f"level-1 cells meet away from their corners at {g.points[v]}")
        t = int(np.argmax(tv))
        for dgt in digits:
            if t not in top.cell_vertex[dgt]:
                raise AxiomViolation("nesting", f"cell {dgt + 1} meets another cell away from its corners")


def build_fractal_system(spec, validation_depth=3, max_points=DEFAULT_MAX_POINTS):
    """Validate ``spec`` and derive k, d, r_0 and the vertex-count constant C_0."""
    if spec.N < 2:
        raise InvalidParameters("need at least two similitudes")
    if not spec.L > 1:
        raise InvalidParameters("scale factor must exceed 1")
    if validation_depth < 1:
        raise InvalidParameters("validation_depth must be at least 1")
    if not np.allclose(spec.nu[0], 0.0, atol=1e-15):
        raise InvalidParameters("first translation must be the origin")
    extent = max(1.0, np.abs(spec.nu).max() * spec.L)
    pts = _essential_points(spec, COORD_TOL * extent)
    if len(pts) < 3:
        raise TooFewEssentialFixedPoints(f"found {len(pts)} essential fixed points, need at least 3")
    pts = _order_polygon(pts)
    _check_regular_polygon(pts, 1e-9)
    system = FractalSystem(spec, pts, validation_depth, max_points=max_points)
    if not system.build_graph(1, 0).is_connected():
        raise NotConnected("the level-1 vertex graph is disconnected")
    _check_nesting(system, validation_depth)
    _check_symmetry(system, validation_depth)

    ratios = []
    for J in range(0, validation_depth + 1):
        g = system.build_graph(J, 0)
        if g.n_vertices < spec.N ** J:
            raise AxiomViolation("count", f"only {g.n_vertices} vertices at window {J}")
        ratios.append(g.n_vertices / spec.N ** J)
    deep = system.build_graph(validation_depth, 0)
    r_0 = int(deep.ranks.max())
    g1 = system.build_graph(1, 0)
    corner_ranks = tuple(int(g1.ranks[g1.locate(p)]) for p in pts)
    report = {
        "verified_to_depth": validation_depth,
        "nesting": "verified",
        "symmetry": "verified",
        "connectivity": "verified",
        "open_set_condition": "not checked",
    }
    return replace(
        system,
        r_0=r_0,
        C_0=float(max(ratios)),
        corner_ranks=corner_ranks,
        report=report,
        _cache={},
    )

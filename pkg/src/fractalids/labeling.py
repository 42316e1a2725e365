"""Good labelings, folding projections and folded walk kernels.

A labeling assigns one of k letters to every vertex of the M-grid.  It is
good when every M-complex carries all k letters and is mapped onto the
primary complex K<M> by a rotation about its barycenter that preserves
letters.  With corners of every complex numbered counter-clockwise, the
rotation by 2 pi r / k sends corner j to corner j + r, so a cell with
rotation r gives corner j the letter (j + r) mod k.  Each shared vertex
then fixes the rotation of a neighbouring cell given the current one, and
breadth-first propagation from the primary cell either closes every cycle
consistently or exhibits a conflict.
"""
from __future__ import annotations

import io
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import (
    InsufficientPadding,
    InvalidParameters,
    NoGLP,
    ResourceLimit,
    UnresolvableLocation,
    VertexOutsideWindow,
)
from .geometry import COORD_TOL, CellAddress, VertexId
from .walks import WalkKernel, ambient_walk_kernel


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotate_about(points, center, r, k):
    """Rotate ``points`` by 2 pi r / k counter-clockwise about ``center``."""
    return (np.asarray(points) - center) @ _rot(2 * np.pi * r / k).T + center


@dataclass(frozen=True, eq=False)
class GoodLabeling:
    """Labels of the M-grid on the window K<M + depth> and per-cell rotations.

    ``labels`` and ``rotations`` are 0-based and do not depend on the order
    M: the labeling of order M is the order-0 labeling scaled by L^M.
    """

    system: object
    M: int
    depth: int
    labels: np.ndarray
    rotations: np.ndarray

    @property
    def k(self):
        return len(np.unique(self.labels))

    @property
    def graph(self):
        return self.system.build_graph(self.M + self.depth, self.M)

    def at_order(self, M):
        return GoodLabeling(self.system, M, self.depth, self.labels, self.rotations)

    def label_of(self, v):
        """Letter in 1..k of a vertex given as VertexId, index or coordinates."""
        i = self.graph.resolve(v)
        return int(self.labels[i]) + 1

    def rotation_of(self, addr):
        """Rotation index i in 1..k meaning rotation by 2 pi i / k (k is the identity)."""
        J = len(addr.word)
        if J > self.depth:
            raise VertexOutsideWindow(f"word {addr.word} is outside the labeled window")
        idx = 0
        for d in addr.word:
            idx = idx * self.system.N + (d - 1)
        r = int(self.rotations[idx])
        return r if r else self.system.k

    def to_csv(self):
        g = self.graph
        inc = g.incidence.tocsc()
        buf = io.StringIO()
        buf.write("vertex_id,label,cell_word,rotation\n")
        for v in range(g.n_vertices):
            for c in inc[:, v].indices:
                word = "".join(str(int(d) + 1) for d in g.cell_words[c]) or "-"
                r = int(self.rotations[c]) or self.system.k
                buf.write(f"{v},{int(self.labels[v]) + 1},{word},{r}\n")
        return buf.getvalue()


def construct_good_labeling(system, M=0, search_depth=2, node_budget=1_000_000):
    """Build a good labeling by rotation propagation from the primary cell.

    Raises NoGLP with a certificate naming the first cell whose required
    rotation contradicts a label that was already fixed.
    """
    if not system.similitudes.is_translational:
        raise InvalidParameters("good labelings are only supported for translation-only systems")
    if search_depth < 1:
        raise InvalidParameters("search_depth must be at least 1")
    k = system.k
    g = system.build_graph(search_depth, 0)
    C = g.n_cells
    inc = g.incidence.tocsc()
    labels = np.full(g.n_vertices, -1, dtype=np.int64)
    rot = np.full(C, -1, dtype=np.int64)
    rot[0] = 0
    queue = deque([0])
    visited = 0
    while queue:
        c = queue.popleft()
        visited += 1
        if visited > node_budget:
            raise ResourceLimit("labeling search exceeded its node budget")
        for j, v in enumerate(g.cell_vertex[c]):
            want = (j + rot[c]) % k
            if labels[v] < 0:
                labels[v] = want
            elif labels[v] != want:
                raise NoGLP(_certificate(g, c, v, labels[v], want))
            for c2 in inc[:, v].indices:
                if c2 == c:
                    continue
                j2 = int(np.nonzero(g.cell_vertex[c2] == v)[0][0])
                r2 = (labels[v] - j2) % k
                if rot[c2] < 0:
                    rot[c2] = r2
                    queue.append(c2)
                elif rot[c2] != r2:
                    raise NoGLP(_certificate(g, c2, v, (j2 + rot[c2]) % k, labels[v]))
    return GoodLabeling(system, M, search_depth, labels, rot)


def _certificate(g, c, v, existing, required):
    return {
        "cell_word": [int(d) + 1 for d in g.cell_words[c]],
        "vertex": [float(x) for x in g.points[v]],
        "existing_label": int(existing) + 1,
        "required_label": int(required) + 1,
    }


def certificate_json(err):
    return json.dumps(err.certificate, sort_keys=True, indent=2)


def verify_good_labeling(labeling, depth=None):
    """Check both labeling conditions cell by cell using explicit geometry.

    Each cell is translated to the origin, rotated by its stored rotation
    about the barycenter of K<M> and matched against the coordinates of the
    primary corners.  Returns ``{"violations": [...], "checked_cells": n}``.
    """
    system = labeling.system
    k = system.k
    depth = labeling.depth if depth is None else depth
    report = {"violations": [], "checked_cells": 0, "depth": depth}
    if labeling.labels.max() + 1 > k or len(np.unique(labeling.labels)) != k:
        report["violations"].append(
            {"cell_word": None, "reason": "precondition: alphabet size differs from k"}
        )
        return report
    if depth > labeling.depth:
        report["violations"].append({"cell_word": None, "reason": "precondition: depth exceeds labeled window"})
        return report
    M = labeling.M
    g = system.build_graph(M + depth, M)
    scale = system.L ** M
    corners = system.essential_fixed_points * scale
    center = corners.mean(axis=0)
    primary = [labeling.labels[g.locate(p)] for p in corners]
    if sorted(primary) != list(range(k)):
        report["violations"].append({"cell_word": [], "reason": "primary corners are not a bijection"})
    tol = COORD_TOL * max(scale, 1.0) * 10
    for c in range(g.n_cells):
        word = [int(d) + 1 for d in g.cell_words[c]]
        vs = g.cell_vertex[c]
        labs = labeling.labels[vs]
        if len(set(labs.tolist())) != k:
            report["violations"].append({"cell_word": word, "reason": "labels on the cell are not distinct"})
            continue
        moved = rotate_about(g.points[vs] - g.base_points[c], center, labeling.rotations[c], k)
        d = np.linalg.norm(moved[:, None, :] - corners[None, :, :], axis=2)
        hit = d.argmin(axis=1)
        if np.any(d[np.arange(len(vs)), hit] > tol):
            report["violations"].append({"cell_word": word, "reason": "rotation does not map the cell onto K<M>"})
            continue
        expected = np.array([primary[h] for h in hit])
        if np.any(expected != labs):
            report["violations"].append({"cell_word": word, "reason": "labels not preserved by the rotation"})
    report["checked_cells"] = g.n_cells
    return report


class ProjectionMap:
    """Folding of the window K<M + pad> onto the primary complex K<M>.

    Vertices are m-grid vertices of the ambient window; images are vertex
    indices of the window graph (M, m).  Because cells are enumerated with
    the most significant digit first, the window graph is a prefix of the
    ambient graph: ambient vertex i < #V(M, m) is the window vertex i.
    """

    def __init__(self, labeling, M=None, m=None, pad=1):
        M = labeling.M if M is None else M
        m = M if m is None else m
        if pad > labeling.depth:
            raise InsufficientPadding(f"pad={pad} exceeds the labeled depth {labeling.depth}")
        if m > M:
            raise InvalidParameters("resolution must not exceed the window")
        self.labeling = labeling
        self.system = labeling.system
        self.M, self.m, self.pad = M, m, pad
        self.ambient = self.system.build_graph(M + pad, m)
        self.window = self.system.build_graph(M, m)
        k = self.system.k
        self.k = k
        scale = self.system.L ** M
        self.center = self.system.essential_fixed_points.mean(axis=0) * scale
        J = M - m
        N = self.system.N
        amb = self.ambient
        self.cell_block = np.arange(amb.n_cells) // N ** J
        mg = self.system.build_graph(M + pad, M)
        self.block_rotation = labeling.rotations[: mg.n_cells].copy()
        self.block_base = mg.base_points
        self._cache = {}
        inc = amb.incidence.tocsc()
        first_cell = np.array([inc[:, v].indices.min() for v in range(amb.n_vertices)])
        self.vertex_block = self.cell_block[first_cell]
        self.vertex_image = self._images_via(np.arange(amb.n_vertices), self.vertex_block)
        n_win = self.window.n_vertices
        if not np.allclose(amb.points[:n_win], self.window.points, atol=COORD_TOL * max(scale, 1)):
            raise InvalidParameters("window graph is not a prefix of the ambient graph")
        blocks = sparse.csr_matrix(
            (np.ones(amb.n_cells), (self.cell_block, np.arange(amb.n_cells))),
            shape=(mg.n_cells, amb.n_cells),
        )
        self.multiplicity = np.asarray(((blocks @ amb.incidence) > 0).sum(axis=0)).ravel()

    def transform(self, points, block):
        """R_Delta(x - nu_Delta) for the M-cell ``block`` of the ambient window."""
        r = self.block_rotation[block]
        shifted = np.asarray(points) - self.block_base[block]
        if np.ndim(block) == 0:
            return rotate_about(shifted, self.center, r, self.k)
        out = np.empty_like(shifted)
        for rr in np.unique(r):
            sel = r == rr
            out[sel] = rotate_about(shifted[sel], self.center, rr, self.k)
        return out

    def inverse_transform(self, points, block):
        r = self.block_rotation[block]
        back = rotate_about(np.asarray(points), self.center, -r, self.k)
        return back + self.block_base[block]

    def _images_via(self, verts, blocks):
        pts = self.transform(self.ambient.points[verts], blocks)
        try:
            return np.atleast_1d(self.window.locate(pts))
        except VertexOutsideWindow as exc:
            raise UnresolvableLocation(str(exc))

    def images_via_all_cells(self, v):
        """Images of ambient vertex ``v`` through every M-cell that contains it."""
        blocks = np.unique(self.cell_block[self.ambient.cells_of(v)])
        return [int(self._images_via(np.array([v]), np.array([b]))[0]) for b in blocks]

    def cell_image(self):
        """Window m-cell index of the image of every ambient m-cell."""
        if "cells" not in self._cache:
            lookup = {frozenset(vs.tolist()): c for c, vs in enumerate(self.window.cell_vertex)}
            imgs = self.vertex_image_per_cell()
            out = np.array([lookup[frozenset(row.tolist())] for row in imgs])
            self._cache["cells"] = out
        return self._cache["cells"]

    def vertex_image_per_cell(self):
        amb = self.ambient
        C, k = amb.cell_vertex.shape
        blocks = np.repeat(self.cell_block, k)
        pts = amb.points[amb.cell_vertex.ravel()]
        return self.window.locate(self.transform(pts, blocks)).reshape(C, k)

    def _ambient_index(self, x):
        if isinstance(x, VertexId):
            if x.M == self.M and x.m == self.m:
                return x.index
            if x.M != self.M + self.pad or x.m != self.m:
                raise UnresolvableLocation("vertex belongs to an unrelated window")
            return x.index
        try:
            return self.ambient.resolve(x)
        except VertexOutsideWindow as exc:
            raise UnresolvableLocation(str(exc))

    def ambient_cell_index(self, addr):
        if addr.m != self.m:
            raise UnresolvableLocation("cell resolution differs from the projection grid")
        word = tuple(addr.word)
        extra = self.M + self.pad - addr.M
        if extra < 0:
            raise UnresolvableLocation("cell lies outside the ambient window")
        word = (1,) * extra + word
        full = CellAddress(self.m, self.M + self.pad, word)
        try:
            return self.ambient.cell_index(full)
        except VertexOutsideWindow as exc:
            raise UnresolvableLocation(str(exc))


def project_point(pm, x):
    """pi_M of an ambient vertex (returned as window VertexId) or of an m-cell."""
    if isinstance(x, CellAddress):
        c = pm.ambient_cell_index(x)
        return pm.window.address(int(pm.cell_image()[c]))
    i = pm._ambient_index(x)
    return pm.window.vertex(int(pm.vertex_image[i]))


def project_to_cell(pm, target, x):
    """pi_Delta = (pi_M restricted to Delta)^{-1} o pi_M for an M-cell ``target``."""
    if target.m != pm.M or target.M > pm.M + pm.pad or len(target.word) != target.M - target.m:
        raise UnresolvableLocation("target must be an M-cell of the ambient window")
    word = (1,) * (pm.pad - len(target.word)) + tuple(target.word)
    block = 0
    for d in word:
        block = block * pm.system.N + (d - 1)
    img = project_point(pm, x)
    if isinstance(img, CellAddress):
        vs = pm.window.cell_vertex[pm.window.cell_index(img)]
        pts = pm.inverse_transform(pm.window.points[vs], block)
        ids = set(np.atleast_1d(pm.ambient.locate(pts)).tolist())
        for c in pm.ambient.cells_of(int(next(iter(ids)))):
            if set(pm.ambient.cell_vertex[c].tolist()) == ids:
                return pm.ambient.address(int(c))
        raise UnresolvableLocation("no ambient cell matches the preimage")
    pt = pm.inverse_transform(np.asarray(img.coordinates), block)
    return pm.ambient.vertex(int(pm.ambient.locate(pt)))


def fold_kernel(ambient, pm, tol=1e-12):
    """Fold an ambient kernel on K<M + pad> onto K<M> through pi_M.

    P_fold(x, y) sums P(x, y') over the preimages y' of y.  The returned
    weight is deg(x) / mult(x), with mult(x) the number of ambient M-cells
    containing x, for which the folded kernel is reversible.
    """
    n = pm.window.n_vertices
    P = ambient.P.tocsr()
    rows = P[:n].tocoo()
    cols = pm.vertex_image[rows.col]
    Pf = sparse.csr_matrix((rows.data, (rows.row, cols)), shape=(n, n))
    Pf.sum_duplicates()
    deficit = 1.0 - np.asarray(Pf.sum(axis=1)).ravel()
    if np.abs(deficit).max() > tol:
        raise InsufficientPadding(f"folded row deficit {np.abs(deficit).max():.3e} exceeds {tol}")
    w = ambient.w[:n] / pm.multiplicity[:n]
    return WalkKernel(Pf, w, pm.M, pm.m)


def folded_kernel(system, labeling, M, m, pad=1):
    pm = ProjectionMap(labeling.at_order(M), M, m, pad)
    amb = ambient_walk_kernel(system, M + pad, m)
    return fold_kernel(amb, pm), pm

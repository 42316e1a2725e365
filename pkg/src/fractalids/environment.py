"""Poisson configurations, single-site profiles and the potentials they induce.

Points of a configuration are stored only as counts per r-cell.  A profile
depends on a point y only through the cells containing it, so this is
exact: an indicator profile of amplitude A0 and range M0 gives
W(x, y) = A0 whenever x lies in the M0-cell of y.  Tiered profiles stack
several such indicators with nonincreasing amplitudes.

Every potential is linear in the counts.  The maps counts -> vertex values
are assembled once per (window, resolution, profile) as sparse matrices.
"""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import (
    InvalidParameters,
    PreconditionViolated,
    ResolutionMismatch,
    ResourceLimit,
    SupportExceedsWindow,
)
from .labeling import ProjectionMap

MAX_CELLS = 20_000_000


def _digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PoissonConfiguration:
    """Counts per r-cell of the window K<M + pad>; the first N^(M-r) cells form K<M>."""

    nu: float
    M: int
    r: int
    pad: int
    counts: np.ndarray
    seed: int
    index: tuple
    N: int

    @property
    def window_counts(self):
        return self.counts[: self.N ** (self.M - self.r)]

    @property
    def total(self):
        return int(self.window_counts.sum())

    def content_hash(self):
        h = hashlib.sha256()
        h.update(json.dumps([self.nu, self.M, self.r, self.pad, self.seed, list(self.index)]).encode())
        h.update(np.ascontiguousarray(self.counts, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]

    def to_csv(self):
        J = self.M - self.r
        buf = io.StringIO()
        buf.write("cell_word,count\n")
        for c, n in enumerate(self.window_counts):
            digits = []
            x = c
            for _ in range(J):
                digits.append(x % self.N + 1)
                x //= self.N
            word = "".join(str(d) for d in reversed(digits)) or "-"
            buf.write(f"{word},{int(n)}\n")
        return buf.getvalue()


def sample_configuration(nu, M, r, seed, *, N, index=0, pad=1, max_cells=MAX_CELLS):
    """Independent Poisson(nu * N^r) counts for every r-cell, from a per-sample stream."""
    if not nu >= 0:
        raise InvalidParameters("intensity must be nonnegative")
    if r > M:
        raise InvalidParameters("configuration resolution must not exceed the window")
    n_win = N ** (M - r)
    n_all = N ** (M + pad - r)
    if n_all > max_cells:
        raise ResourceLimit(f"{n_all} cells exceed the cap {max_cells}")
    key = tuple(int(v) for v in np.atleast_1d(index))
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
    mean = nu * float(N) ** r
    first = rng.poisson(mean, n_win)
    rest = rng.poisson(mean, n_all - n_win)
    counts = np.concatenate([first, rest]).astype(np.int64)
    return PoissonConfiguration(float(nu), M, r, pad, counts, int(seed), key, N)


@dataclass(frozen=True)
class SingleSiteProfile:
    """W(x, y) = sum_i (a_i - a_(i+1)) 1[x in the s_i-cell of y], a_(n+1) = 0.

    ``rungs`` lists (scale, amplitude) with increasing scales and
    nonincreasing positive amplitudes.  The floor is (m_0, A_0) = rungs[0]
    and the support scale is M_0 = rungs[-1] scale.
    """

    kind: str
    rungs: tuple

    def __post_init__(self):
        if self.kind not in ("indicator", "tiered"):
            raise InvalidParameters(f"unknown profile kind {self.kind!r}")
        rungs = tuple((int(s), float(a)) for s, a in self.rungs)
        if not rungs:
            raise InvalidParameters("profile needs at least one rung")
        scales = [s for s, _ in rungs]
        amps = [a for _, a in rungs]
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise InvalidParameters("rung scales must increase")
        if any(a <= 0 for a in amps) or any(b > a for a, b in zip(amps, amps[1:])):
            raise InvalidParameters("rung amplitudes must be positive and nonincreasing")
        if self.kind == "indicator" and len(rungs) != 1:
            raise InvalidParameters("indicator profile has exactly one rung")
        object.__setattr__(self, "rungs", rungs)

    @classmethod
    def indicator(cls, A0, M0):
        return cls("indicator", ((M0, A0),))

    @classmethod
    def tiered(cls, rungs):
        return cls("tiered", tuple(rungs))

    @property
    def m_0(self):
        return self.rungs[0][0]

    @property
    def A_0(self):
        return self.rungs[0][1]

    @property
    def M_0(self):
        return self.rungs[-1][0]

    def coefficients(self):
        amps = [a for _, a in self.rungs] + [0.0]
        return [(s, amps[i] - amps[i + 1]) for i, (s, _) in enumerate(self.rungs)]

    def to_dict(self):
        if self.kind == "indicator":
            return {"kind": "indicator", "A0": self.A_0, "M0": self.M_0}
        return {"kind": "tiered", "rungs": [list(r) for r in self.rungs]}

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        kind = data.pop("kind", None)
        if kind == "indicator":
            extra = set(data) - {"A0", "M0"}
            if extra:
                raise InvalidParameters(f"unknown profile keys {sorted(extra)}")
            return cls.indicator(float(data["A0"]), int(data["M0"]))
        if kind == "tiered":
            extra = set(data) - {"rungs"}
            if extra:
                raise InvalidParameters(f"unknown profile keys {sorted(extra)}")
            return cls.tiered(tuple(tuple(r) for r in data["rungs"]))
        raise InvalidParameters(f"unknown profile kind {kind!r}")

    def content_hash(self):
        return _digest(self.to_dict())


@dataclass(frozen=True, eq=False)
class PotentialField:
    M: int
    m: int
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("vertex_id,value\n")
        for i, v in enumerate(self.values):
            buf.write(f"{i},{v:.17g}\n")
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class OccupancyField:
    m_0: int
    M: int
    bits: np.ndarray

    @property
    def delta(self):
        return float(self.bits.mean()) if len(self.bits) else 0.0


def scale_incidence(system, M, m, s):
    """0/1 matrix of s-cells (rows) against m-grid vertices of K<M> (columns)."""
    if s < m:
        raise ResolutionMismatch(f"cell scale {s} is finer than the grid resolution {m}")
    if s > M:
        raise ResolutionMismatch(f"cell scale {s} exceeds the window {M}")
    key = ("scale-inc", M, m, s)
    cache = system._cache
    if key not in cache:
        g = system.build_graph(M, m)
        group = np.arange(g.n_cells) // system.N ** (s - m)
        agg = sparse.csr_matrix(
            (np.ones(g.n_cells), (group, np.arange(g.n_cells))), shape=(group[-1] + 1, g.n_cells)
        )
        inc = (agg @ g.incidence).tocsr()
        inc.data[:] = 1.0
        cache[key] = inc
    return cache[key]


def _aggregate(n_cells, factor):
    group = np.arange(n_cells) // factor
    return sparse.csr_matrix((np.ones(n_cells), (group, np.arange(n_cells))), shape=(group[-1] + 1, n_cells))


def potential_matrix(system, Mamb, m, r, profile):
    """Linear map from r-cell counts of K<Mamb> to potential values on its m-grid."""
    if r > profile.m_0:
        raise ResolutionMismatch(f"configuration resolution {r} is coarser than the profile floor {profile.m_0}")
    key = ("pot-mat", Mamb, m, r, profile.to_dict().__repr__())
    cache = system._cache
    if key not in cache:
        nV = system.build_graph(Mamb, m).n_vertices
        n_r = system.N ** (Mamb - r)
        out = sparse.csr_matrix((nV, n_r))
        for s, coef in profile.coefficients():
            inc = scale_incidence(system, Mamb, m, s)
            out = out + coef * (inc.T @ _aggregate(n_r, system.N ** (s - r)))
        cache[key] = out.tocsr()
    return cache[key]


def _check_support(profile, M, pad):
    if profile.M_0 > M + pad - 1:
        raise SupportExceedsWindow(f"support scale {profile.M_0} needs a window beyond M + pad = {M + pad}")


def evaluate_potential(config, profile, graph):
    """V(x) = sum of count * W(x, cell) over all cells of the sampled region."""
    system = graph.system
    M, m = graph.M, graph.m
    if config.M != M:
        raise InvalidParameters("configuration and graph windows differ")
    _check_support(profile, M, config.pad)
    if len(config.counts) != system.N ** (M + config.pad - config.r):
        raise InvalidParameters("configuration counts do not cover the padded window")
    P = potential_matrix(system, M + config.pad, m, config.r, profile)
    vals = P @ config.counts
    vals = np.asarray(vals[: graph.n_vertices], dtype=float)
    prov = {"configuration": config.content_hash(), "profile": profile.content_hash(), "periodized": False}
    return PotentialField(M, m, vals, prov)


def projection_map(system, labeling, M, m, pad=1):
    key = ("pm", M, m, pad, labeling.depth)
    cache = system._cache
    if key not in cache:
        cache[key] = ProjectionMap(labeling.at_order(M), M, m, pad)
    return cache[key]


def periodized_matrix(system, labeling, M, m, r, profile):
    """Linear map from window r-cell counts to the periodized potential on the window m-grid."""
    if profile.M_0 >= M:
        raise SupportExceedsWindow(f"periodization needs M > M_0 (M={M}, M_0={profile.M_0})")
    key = ("per-mat", M, m, r, profile.to_dict().__repr__(), labeling.depth)
    cache = system._cache
    if key not in cache:
        P = potential_matrix(system, M + 1, m, r, profile)
        pm = projection_map(system, labeling, M, r, 1)
        img = pm.cell_image()
        n_win_r = system.N ** (M - r)
        tile = sparse.csr_matrix((np.ones(len(img)), (np.arange(len(img)), img)), shape=(len(img), n_win_r))
        nV = system.build_graph(M, m).n_vertices
        cache[key] = (P @ tile).tocsr()[:nV]
    return cache[key]


def periodize_potential(config, profile, M, graph, labeling):
    """Potential of the configuration in K<M> tiled over the unbounded fractal through pi_M."""
    system = graph.system
    if graph.M != M or config.M != M:
        raise InvalidParameters("window mismatch")
    G = periodized_matrix(system, labeling, M, graph.m, config.r, profile)
    vals = np.asarray(G @ config.window_counts, dtype=float)
    prov = {"configuration": config.content_hash(), "profile": profile.content_hash(), "periodized": True}
    return PotentialField(M, graph.m, vals, prov)


def occupancy_indicators(config, m_0):
    if m_0 < config.r:
        raise ResolutionMismatch("occupancy scale finer than the configuration resolution")
    if m_0 > config.M:
        raise ResolutionMismatch("occupancy scale exceeds the window")
    cs = config.window_counts.reshape(-1, config.N ** (m_0 - config.r)).sum(axis=1)
    return OccupancyField(m_0, config.M, (cs > 0).astype(np.int64))


def grid_mask(system, M, m, s):
    """True at vertices of the m-grid that also belong to the s-grid."""
    key = ("grid-mask", M, m, s)
    cache = system._cache
    if key not in cache:
        g = system.build_graph(M, m)
        coarse = system.build_graph(M, s)
        mask = np.zeros(g.n_vertices, dtype=bool)
        mask[np.atleast_1d(g.locate(coarse.points))] = True
        cache[key] = mask
    return cache[key]


def alloy_potential(occ, A_0, M, graph):
    """A_0 q_Delta(x) off the m_0-grid and 0 on it."""
    system = graph.system
    m = graph.m
    if occ.m_0 < m:
        raise ResolutionMismatch("occupancy scale finer than the grid")
    inc = graph.incidence.tocsc()
    first = np.array([inc[:, v].indices.min() for v in range(graph.n_vertices)])
    cell = first // system.N ** (occ.m_0 - m)
    vals = A_0 * occ.bits[cell].astype(float)
    vals[grid_mask(system, M, m, occ.m_0)] = 0.0
    return PotentialField(M, m, vals, {"alloy": True, "m_0": occ.m_0})


def diminished_potential(Vbar, C1, A_0, M, alpha, L):
    """(A_0 D_0 / L^(M alpha)) q with D_0 = C1 / (4 A_0)."""
    D0 = C1 / (4.0 * A_0)
    ratio = D0 / L ** (M * alpha)
    if ratio >= 1:
        raise PreconditionViolated(f"D_0 / L^(M alpha) = {ratio:.3g} >= 1; the window is too small")
    return PotentialField(Vbar.M, Vbar.m, ratio * Vbar.values, dict(Vbar.provenance, diminished=ratio))


def check_profile_conditions(profile, system, labeling=None, depth=0, windows=(2, 3)):
    """Structural (W2) checks and an exhaustive check of the periodization inequality.

    For a unit site y in the window, U(z) sums W(z, y') over the whole
    pi_M-fibre of y.  The inequality requires U(pi_M(x)) <= U(pi_(M+1)(x));
    since pi_(M+1) fixes K<M + 1>, it is checked for every vertex x of the
    r-grid of K<M + 1> (r = m_0 - depth) and every r-cell of K<M>.  U is
    evaluated on K<M + 2> so that no vertex of K<M + 1> loses neighbours.
    """
    report = {
        "W2a": {"pass": True, "detail": f"W >= {profile.A_0} whenever x is in the {profile.m_0}-cell of y"},
        "W2b": {"pass": True, "detail": f"W = 0 outside the {profile.M_0}-cell of y"},
        "W1ab": {"pass": True, "detail": "structural: bounded support implies finiteness"},
        "W1c": {},
    }
    r = profile.m_0 - depth
    smallest = None
    for M in windows:
        entry = {"checked": False, "pass": False}
        report["W1c"][M] = entry
        if profile.M_0 >= M:
            entry["reason"] = "support exceeds window"
            continue
        if labeling is None or labeling.depth < 2:
            entry["reason"] = "needs a labeling of depth >= 2"
            continue
        P = potential_matrix(system, M + 2, r, r, profile)
        pm2 = projection_map(system, labeling, M, r, 2)
        img = pm2.cell_image()
        n_win_r = system.N ** (M - r)
        tile = sparse.csr_matrix((np.ones(len(img)), (np.arange(len(img)), img)), shape=(len(img), n_win_r))
        U = (P @ tile).toarray()
        n1 = system.build_graph(M + 1, r).n_vertices
        vimg = pm2.vertex_image[:n1]
        excess = U[vimg] - U[:n1]
        worst = float(excess.max())
        entry.update(checked=True, pairs=int(excess.size), worst_excess=worst, **{"pass": worst <= 1e-12})
        if entry["pass"] and smallest is None:
            smallest = M
    report["W1c_smallest_window"] = smallest
    report["pass"] = all(v["pass"] for v in report["W1c"].values())
    return report

"""Neumann and Dirichlet operators on window grids and their spectra.

The discrete generator is I - P for a reversible kernel P with weight w;
conjugating by D = diag(w) gives the symmetric matrix D^1/2 (I - P) D^-1/2.
Eigenvalues mu_hat of the grid (M, m) are brought to the continuum scale of
the window by mu = tau^(-m) mu_hat, where tau = L^d_w is the time-scaling
factor; the calibration constant of that identification is fixed to 1.
"""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .bernstein import BernsteinFunction
from .errors import DimensionMismatch, InvalidParameters, NonConvergentRatio, ResourceLimit, SolverFailure
from .labeling import folded_kernel
from .walks import ambient_walk_kernel

DENSE_LIMIT = 4000
PARTIAL_COUNT = 200


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    matrix: np.ndarray
    weights: np.ndarray
    boundary: str
    M: int
    m: int
    pad: int = 0
    vertices: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.matrix.shape[0]

    def dense(self):
        A = self.matrix
        return A.toarray() if sparse.issparse(A) else np.asarray(A)


@dataclass(frozen=True, eq=False)
class SpectrumRecord:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    dimension: int | None = None

    @property
    def complete(self):
        return self.dimension is None or self.dimension == len(self.eigenvalues)

    def content_hash(self):
        h = hashlib.sha256()
        h.update(json.dumps(_jsonable(self.meta), sort_keys=True).encode())
        h.update(np.ascontiguousarray(self.eigenvalues, dtype=float).tobytes())
        return h.hexdigest()

    def to_csv(self, mu=None):
        mu = self.eigenvalues if mu is None else mu
        buf = io.StringIO()
        buf.write("index,mu,lambda\n")
        for i, (a, b) in enumerate(zip(mu, self.eigenvalues)):
            buf.write(f"{i + 1},{a:.17g},{b:.17g}\n")
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _symmetrize(kernel):
    n = kernel.n
    s = np.sqrt(kernel.w)
    A = sparse.identity(n, format="csr") - sparse.diags(s) @ kernel.P @ sparse.diags(1.0 / s)
    A = 0.5 * (A + A.T)
    return A.tocsr()


def _store(op):
    return op.toarray() if op.shape[0] <= DENSE_LIMIT else op


def neumann_laplacian(system, labeling, M, m, pad=1):
    """Folded (reflected) Laplacian on the window grid (M, m)."""
    key = ("neumann", M, m, pad, labeling.depth)
    cache = system._cache
    if key not in cache:
        kernel, _ = folded_kernel(system, labeling, M, m, pad)
        A = _store(_symmetrize(kernel))
        cache[key] = SymmetricOperator(A, kernel.w, "N", M, m, pad, np.arange(kernel.n))
    return cache[key]


def interior_vertices(system, M, m):
    g = system.build_graph(M, m)
    keep = np.ones(g.n_vertices, dtype=bool)
    keep[g.corners] = False
    return np.nonzero(keep)[0]


def dirichlet_operator(system, M, m, pad=1):
    """Walk killed at the k window corners, cut from the ambient window M + pad."""
    if pad < 1:
        raise InvalidParameters("pad must be at least 1")
    kernel = ambient_walk_kernel(system, M + pad, m)
    idx = interior_vertices(system, M, m)
    A = _symmetrize(kernel)[idx][:, idx]
    return SymmetricOperator(_store(A), kernel.w[idx], "D", M, m, pad, idx)


def eigen_spectrum(op, vectors=False, count=None):
    """Ascending spectrum; dense up to DENSE_LIMIT, else the lowest ``count``."""
    n = op.n
    if n == 0:
        return SpectrumRecord(np.zeros(0), np.zeros((0, 0)) if vectors else None, dict(op.meta), 0)
    try:
        if n <= DENSE_LIMIT:
            if vectors:
                lam, vec = linalg.eigh(op.dense())
            else:
                lam, vec = linalg.eigh(op.dense(), eigvals_only=True), None
        else:
            kk = min(count or PARTIAL_COUNT, n - 2)
            lam, vec = splinalg.eigsh(sparse.csr_matrix(op.matrix), k=kk, sigma=-1e-3, which="LM")
            order = np.argsort(lam)
            lam = lam[order]
            vec = vec[:, order] if vectors else None
    except (np.linalg.LinAlgError, linalg.LinAlgError, splinalg.ArpackNoConvergence) as exc:
        raise SolverFailure(str(exc))
    meta = dict(op.meta, M=op.M, m=op.m, boundary=op.boundary)
    return SpectrumRecord(np.asarray(lam), vec, meta, n)


def neumann_eigensystem(system, labeling, M, m, pad=1):
    key = ("neumann-eig", M, m, pad, labeling.depth)
    cache = system._cache
    if key not in cache:
        rec = eigen_spectrum(neumann_laplacian(system, labeling, M, m, pad), vectors=True)
        lam = np.clip(rec.eigenvalues, 0.0, None)
        lam[0] = 0.0
        cache[key] = (lam, rec.eigenvectors)
    return cache[key]


@dataclass(frozen=True)
class TimeScaling:
    tau: float
    d_w: float
    ratios: tuple
    mu2: tuple
    depths: tuple
    accelerated: float | None


def estimate_time_scaling(system, labeling, depths=(1, 2, 3, 4), tol=0.05):
    """tau_hat from ratios of the first nonzero Neumann eigenvalue at successive depths."""
    depths = tuple(sorted(depths))
    if len(depths) < 2:
        raise InvalidParameters("need at least two depths")
    mu2 = []
    for j in depths:
        lam, _ = neumann_eigensystem(system, labeling, j, 0)
        mu2.append(float(lam[1]))
    ratios = tuple(a / b for a, b in zip(mu2[:-1], mu2[1:]))
    if len(ratios) >= 2 and abs(ratios[-1] - ratios[-2]) > tol * ratios[-1]:
        raise NonConvergentRatio(f"successive ratios {ratios[-2]:.4f}, {ratios[-1]:.4f} differ by more than {tol:.0%}")
    acc = None
    if len(ratios) >= 3:
        a, b, c = ratios[-3:]
        den = (c - b) - (b - a)
        acc = c - (c - b) ** 2 / den if den != 0 else c
    tau = ratios[-1]
    return TimeScaling(tau, float(np.log(tau) / np.log(system.L)), ratios, tuple(mu2), depths, acc)


def renormalize_spectrum(rec, tau, depth=None):
    """mu = tau^depth * mu_hat; the default depth -m gives window-M continuum units."""
    if not tau > 1:
        raise InvalidParameters("tau must exceed 1")
    if depth is None:
        depth = -rec.meta.get("m", 0)
    mu = rec.eigenvalues * float(tau) ** depth
    return replace(rec, eigenvalues=mu, meta=dict(rec.meta, tau=float(tau), renormalized=depth))


def subordinate_spectrum(rec, phi):
    lam = np.asarray(phi(np.clip(rec.eigenvalues, 0.0, None)), dtype=float)
    return replace(rec, eigenvalues=lam, meta=dict(rec.meta, phi=phi.descriptor()))


def _phi_or_identity(phi):
    return BernsteinFunction.identity() if phi is None else phi


def _check_potential(V, n):
    V = np.zeros(n) if V is None else np.asarray(getattr(V, "values", V), dtype=float)
    if V.shape != (n,):
        raise DimensionMismatch(f"potential has shape {V.shape}, expected ({n},)")
    return V


def subordinated_neumann(system, labeling, M, m, phi, tau, pad=1):
    """U phi(tau^-m Lambda_hat) U^T in the symmetric basis."""
    phi = _phi_or_identity(phi)
    key = ("phiN", M, m, pad, labeling.depth, phi.descriptor(), float(tau))
    cache = system._cache
    if key not in cache:
        lam, U = neumann_eigensystem(system, labeling, M, m, pad)
        f = phi(lam * float(tau) ** (-m))
        H = (U * f) @ U.T
        cache[key] = 0.5 * (H + H.T)
    return cache[key]


def neumann_schrodinger(system, labeling, M, m, phi, V, tau, pad=1):
    H0 = subordinated_neumann(system, labeling, M, m, phi, tau, pad)
    V = _check_potential(V, H0.shape[0])
    H = H0 + np.diag(V)
    meta = {"phi": _phi_or_identity(phi).descriptor(), "tau": float(tau)}
    return SymmetricOperator(H, np.ones(len(V)), "N", M, m, pad, np.arange(len(V)), meta)


def dirichlet_schrodinger(system, labeling, M, m, pad, phi, V, tau):
    """phi of the folded Laplacian on window M + pad, cut to the interior of window M."""
    if pad < 1:
        raise InvalidParameters("pad must be at least 1")
    Hamb = subordinated_neumann(system, labeling, M + pad, m, phi, tau, pad=1)
    idx = interior_vertices(system, M, m)
    nwin = system.build_graph(M, m).n_vertices
    if V is not None:
        vals = np.asarray(getattr(V, "values", V), dtype=float)
        if vals.shape == (nwin,):
            V = vals[idx]
    V = _check_potential(V, len(idx))
    H = Hamb[np.ix_(idx, idx)] + np.diag(V)
    meta = {"phi": _phi_or_identity(phi).descriptor(), "tau": float(tau)}
    return SymmetricOperator(H, np.ones(len(idx)), "D", M, m, pad, idx, meta)


def trace_heat(rec, t):
    if not t > 0:
        raise InvalidParameters("t must be positive")
    return float(np.exp(-np.asarray(rec.eigenvalues) * t).sum())


def unit_dirichlet_eigenvalue(system, tau, depth=4):
    """Renormalized principal Dirichlet eigenvalue of K<0> from the grid at resolution -depth."""
    rec = eigen_spectrum(dirichlet_operator(system, 0, -depth))
    return float(rec.eigenvalues[0] * float(tau) ** depth)


def reference_gap_constant(system, labeling, phi, tau, alpha, M_ref=2, m=0):
    """C1_tilde = lambda_2 of the free Neumann operator at window M_ref times L^(M_ref alpha)."""
    H = subordinated_neumann(system, labeling, M_ref, m, phi, tau)
    lam = linalg.eigh(H, eigvals_only=True)
    return float(lam[1] * system.L ** (M_ref * alpha))


def check_dimension(op, limit):
    if op.n > limit:
        raise ResourceLimit(f"operator dimension {op.n} exceeds {limit}")

"""Integrated density of states, Laplace transforms, bounds and exponent fits."""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .environment import (
    evaluate_potential,
    occupancy_indicators,
    periodize_potential,
    sample_configuration,
)
from .errors import (
    AmplitudeTooLarge,
    EmptyWindow,
    InvalidParameters,
    NonpositiveIDS,
    ParameterOrderViolation,
    PreconditionViolated,
)
from .spectral import SpectrumRecord, dirichlet_schrodinger, neumann_schrodinger


@dataclass(frozen=True, eq=False)
class EmpiricalIDS:
    """Lambda(lam) = N^-M / S * #{pooled eigenvalues <= lam} over S samples."""

    boundary: str
    M: int
    N: int
    eigenvalues: np.ndarray
    samples: int = 1

    @property
    def weight(self):
        return float(self.N) ** (-self.M) / self.samples

    @property
    def annealed(self):
        return self.samples > 1

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        return np.searchsorted(self.eigenvalues, lam, side="right") * self.weight

    @property
    def total_mass(self):
        return len(self.eigenvalues) * self.weight

    def to_csv(self, lam, stderr=None):
        vals = self(lam)
        se = np.zeros_like(vals) if stderr is None else stderr
        buf = io.StringIO()
        buf.write("lambda,ids,stderr\n")
        for a, b, c in zip(lam, vals, se):
            buf.write(f"{a:.17g},{b:.17g},{c:.17g}\n")
        return buf.getvalue()


def empirical_ids(rec, M, N, boundary=None):
    """IDS of one spectrum or the pooled IDS of a list of spectra."""
    recs = rec if isinstance(rec, (list, tuple)) else [rec]
    vals = np.sort(np.concatenate([np.asarray(r.eigenvalues, dtype=float) for r in recs]))
    b = boundary or recs[0].meta.get("boundary", "N")
    return EmpiricalIDS(b, M, N, vals, len(recs))


def laplace_transform(obj, t, M=None, N=None):
    """N^-M sum exp(-lam t) for a SpectrumRecord (needs M, N) or an EmpiricalIDS."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidParameters("t must be positive")
    if isinstance(obj, EmpiricalIDS):
        lam, w = obj.eigenvalues, obj.weight
    else:
        lam, w = np.asarray(obj.eigenvalues), float(N) ** (-M)
    out = w * np.exp(-np.multiply.outer(t, lam)).sum(axis=-1)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class LaplaceCurve:
    t: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("t,value,stderr\n")
        for a, b, c in zip(self.t, self.values, self.stderr):
            buf.write(f"{a:.17g},{b:.17g},{c:.17g}\n")
        return buf.getvalue()

    def at(self, t):
        i = int(np.argmin(np.abs(np.log(self.t) - np.log(t))))
        if not math.isclose(self.t[i], t, rel_tol=1e-9):
            raise InvalidParameters(f"t={t} is not on the curve grid")
        return float(self.values[i]), float(self.stderr[i])


def default_t_grid():
    return np.logspace(-1, 4, 101)


@dataclass(eq=False)
class AnnealedRun:
    """Per-window sample results of an annealed computation."""

    M: int
    spectra_N: list
    spectra_D: list
    laplace_N: np.ndarray
    laplace_D: np.ndarray
    t: np.ndarray
    N: int
    meta: dict

    def curve(self, boundary):
        vals = self.laplace_N if boundary == "N" else self.laplace_D
        S = len(vals)
        se = vals.std(axis=0, ddof=1) / np.sqrt(S) if S > 1 else np.zeros(vals.shape[1])
        return LaplaceCurve(self.t, vals.mean(axis=0), se, dict(self.meta, boundary=boundary, M=self.M, samples=S))

    def ids(self, boundary="N"):
        recs = self.spectra_N if boundary == "N" else self.spectra_D
        return empirical_ids(recs, self.M, self.N, boundary)

    def lambda1(self, boundary="N"):
        recs = self.spectra_N if boundary == "N" else self.spectra_D
        return np.array([r.eigenvalues[0] if len(r.eigenvalues) else np.inf for r in recs])


def _one_sample(ctx, M, i):
    system, labeling, phi, profile, nu, m, seed, tau, r, dirichlet, pad = ctx
    g = system.build_graph(M, m)
    conf = sample_configuration(nu, M, r, seed, N=system.N, index=(M, i), pad=1)
    Vn = periodize_potential(conf, profile, M, g, labeling)
    Hn = neumann_schrodinger(system, labeling, M, m, phi, Vn, tau)
    lam_n = linalg.eigvalsh(Hn.matrix)
    lam_n = np.clip(lam_n, 0.0, None)
    out = {"N": lam_n}
    if dirichlet:
        Vd = evaluate_potential(conf, profile, g)
        Hd = dirichlet_schrodinger(system, labeling, M, m, pad, phi, Vd, tau)
        lam_d = np.clip(linalg.eigvalsh(Hd.matrix), 0.0, None) if Hd.n else np.zeros(0)
        out["D"] = lam_d
    return out


def annealed_curves(system, labeling, phi, profile, nu, M_list, m, samples, seed, tau, t_grid=None, threads=1, dirichlet=True, r=None, pad=1):
    """Sample, periodize, diagonalize and average over configurations for every window.

    ``pad`` is the number of window levels around K<M> that the killed
    (Dirichlet) operator sees before it is restricted to the interior.
    """
    t = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    r = profile.m_0 if r is None else r
    ctx = (system, labeling, phi, profile, nu, m, seed, tau, r, dirichlet, pad)
    results = {}
    for M in M_list:
        # warm caches serially so worker threads only read them
        _one_sample(ctx, M, 0)
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                outs = list(ex.map(lambda i: _one_sample(ctx, M, i), range(samples)))
        else:
            outs = [_one_sample(ctx, M, i) for i in range(samples)]
        w = float(system.N) ** (-M)
        meta = {"nu": nu, "m": m, "phi": phi.descriptor(), "profile": profile.to_dict(), "seed": seed}
        spN = [SpectrumRecord(o["N"], meta={"boundary": "N", "M": M, "m": m}) for o in outs]
        LN = np.array([w * np.exp(-np.multiply.outer(t, o["N"])).sum(axis=1) for o in outs])
        if dirichlet:
            spD = [SpectrumRecord(o["D"], meta={"boundary": "D", "M": M, "m": m}) for o in outs]
            LD = np.array([w * np.exp(-np.multiply.outer(t, o["D"])).sum(axis=1) for o in outs])
        else:
            spD, LD = [], np.zeros_like(LN)
        results[M] = AnnealedRun(M, spN, spD, LN, LD, t, system.N, meta)
    return results


def monotonicity_diagnostic(curves, t_points=None, sigmas=2.0):
    """Check E L_(M+1)(t) <= E L_M(t) + sigmas * combined standard error."""
    Ms = sorted(curves)
    if len(Ms) < 2:
        raise InvalidParameters("need at least two windows")
    violations, rows = [], []
    for a, b in zip(Ms[:-1], Ms[1:]):
        ca, cb = curves[a], curves[b]
        ts = ca.t if t_points is None else t_points
        for t in ts:
            va, sa = ca.at(t)
            vb, sb = cb.at(t)
            slack = sigmas * math.hypot(sa, sb)
            row = {"M": a, "M_next": b, "t": float(t), "L_M": va, "L_next": vb, "slack": slack}
            rows.append(row)
            if vb > va + slack:
                violations.append(row)
    return {"violations": violations, "checks": rows, "pass": not violations}


def dn_gap_diagnostic(curves_N, curves_D, t_points=(1.0,), sigmas=2.0):
    """|E L^D - E L^N| per window; must not grow with M beyond MC error."""
    Ms = sorted(curves_N)
    gaps = {}
    for M in Ms:
        row = {}
        for t in t_points:
            vn, sn = curves_N[M].at(t)
            vd, sd = curves_D[M].at(t)
            row[float(t)] = (abs(vd - vn), math.hypot(sn, sd))
        gaps[M] = row
    violations = []
    for a, b in zip(Ms[:-1], Ms[1:]):
        for t in t_points:
            ga, sa = gaps[a][float(t)]
            gb, sb = gaps[b][float(t)]
            if gb > ga + sigmas * math.hypot(sa, sb):
                violations.append({"M": a, "M_next": b, "t": float(t), "gap": ga, "gap_next": gb})
    out = {
        "gaps": {M: {t: v[0] for t, v in row.items()} for M, row in gaps.items()},
        "stderr": {M: {t: v[1] for t, v in row.items()} for M, row in gaps.items()},
        "violations": violations,
        "pass": not violations,
    }
    return out


# -- ground-state bounds -------------------------------------------------------


def temple_bound(H, eta, psi):
    """<psi,H psi> - (<H psi,H psi> - <psi,H psi>^2) / (eta - <psi,H psi>)."""
    H = getattr(H, "matrix", H)
    psi = np.asarray(psi, dtype=float)
    nrm = np.linalg.norm(psi)
    if not math.isclose(nrm, 1.0, rel_tol=1e-10):
        raise PreconditionViolated(f"trial vector has norm {nrm}")
    Hpsi = H @ psi
    e = float(psi @ Hpsi)
    if e >= eta:
        raise PreconditionViolated(f"<psi,H psi> = {e} is not below eta = {eta}")
    var = float(Hpsi @ Hpsi) - e * e
    return e - var / (eta - e)


def lemma33_bound(Vtilde, M, C1, alpha, L):
    """mean(V) - 2 mean(V^2) / (C1 L^(-M alpha)) with uniform vertex quadrature."""
    v = np.asarray(getattr(Vtilde, "values", Vtilde), dtype=float)
    eta = C1 * L ** (-M * alpha)
    if v.size and v.max() >= eta:
        raise AmplitudeTooLarge(f"potential amplitude {v.max():.3g} reaches the gap scale {eta:.3g}")
    return float(v.mean() - 2.0 * (v * v).mean() / eta)


def lemma34_check(samples, delta, M, C1, alpha, L):
    """``samples`` holds (occupied fraction, lambda_1 with the alloy potential) pairs."""
    thr = C1 * delta / (8.0 * L ** (M * alpha))
    inside = [(f, lam) for f, lam in samples if f >= delta]
    fails = [(f, lam) for f, lam in inside if lam < thr]
    return {
        "threshold": thr,
        "in_event": len(inside),
        "excluded": len(samples) - len(inside),
        "failures": [{"fraction": f, "lambda1": lam} for f, lam in fails],
        "pass_rate": 1.0 if not inside else 1.0 - len(fails) / len(inside),
        "pass": not fails,
    }


def bernstein_tail_bound(n, p, gamma):
    """[((1-p)/(1-gamma))^(1-gamma) (p/gamma)^gamma]^n, bounding P[S_n >= gamma n]."""
    if not 0 < p < gamma < 1:
        raise ParameterOrderViolation(f"need 0 < p < gamma < 1, got p={p}, gamma={gamma}")
    base = ((1 - p) / (1 - gamma)) ** (1 - gamma) * (p / gamma) ** gamma
    return float(base ** n)


def binomial_tail(n, p, gamma):
    """Exact P[S_n >= gamma n] for S_n ~ B(n, p)."""
    kmin = math.ceil(gamma * n - 1e-12)
    return float(stats.binom.sf(kmin - 1, n, p))


def window_select(t, nu, d, alpha, ratio=1.0, L=2.0):
    """The M with ratio L^(M(d+alpha)) <= t/nu < ratio L^((M+1)(d+alpha))."""
    if not (t > 0 and nu > 0):
        raise InvalidParameters("t and nu must be positive")
    x = t / nu
    e = d + alpha
    M = math.floor(math.log(x / ratio) / (e * math.log(L)))
    while ratio * L ** (M * e) > x:
        M -= 1
    while ratio * L ** ((M + 1) * e) <= x:
        M += 1
    return M


def vacancy_lower_bound(nu, M, M_0, c1_geom, lam1_unit, phi, t, L, d, d_w):
    """exp{-t phi(L^(-M d_w) lam1) - nu (L^(M d) + c1 L^(M_0 d))}."""
    t = np.asarray(t, dtype=float)
    energy = phi(L ** (-M * d_w) * lam1_unit)
    out = np.exp(-t * energy - nu * (L ** (M * d) + c1_geom * L ** (M_0 * d)))
    return out if out.ndim else float(out)


# -- exponent fits ------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    exponent: float
    stderr: float
    window: tuple
    residual: float
    target: float | None = None
    prefactor: float | None = None
    prefactor_fixed: float | None = None
    points: int = 0

    @property
    def relative_error(self):
        if self.target is None:
            return None
        return abs(self.exponent - self.target) / abs(self.target)

    def to_dict(self):
        return {
            "exponent": self.exponent,
            "stderr": self.stderr,
            "window": list(self.window),
            "residual": self.residual,
            "target": self.target,
            "prefactor": self.prefactor,
            "prefactor_fixed": self.prefactor_fixed,
            "points": self.points,
            "relative_error": self.relative_error,
        }


def _linfit(x, y):
    n = len(x)
    if n < 2:
        raise EmptyWindow("fewer than two points in the fit window")
    A = np.vstack([x, np.ones(n)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    rss = float(res @ res)
    if n > 2:
        s2 = rss / (n - 2)
        cov = s2 * np.linalg.inv(A.T @ A)
        se = float(np.sqrt(cov[0, 0]))
    else:
        se = 0.0
    return float(coef[0]), float(coef[1]), se, float(np.sqrt(rss / n))


def default_lambda_window(ids):
    lam = ids.eigenvalues
    pos = lam[lam > 0]
    if not len(pos):
        raise EmptyWindow("no positive eigenvalues")
    return float(pos[0]), float(np.quantile(lam, 0.05))


def lifshitz_fit(ids, lam_window=None, target=None, points=40):
    """Slope of log(-log Lambda) against log lambda on a geometric grid in the window."""
    if lam_window is None:
        lam_window = default_lambda_window(ids)
    lo, hi = lam_window
    if not 0 < lo < hi:
        raise EmptyWindow(f"invalid lambda window {lam_window}")
    lam = np.geomspace(lo, hi, points)
    vals = ids(lam) if callable(ids) else np.interp(lam, *ids)
    if np.any(vals <= 0):
        raise NonpositiveIDS("Lambda vanishes inside the fit window")
    if np.any(vals >= 1):
        raise NonpositiveIDS("-log Lambda must be positive inside the fit window")
    slope, icpt, se, res = _linfit(np.log(lam), np.log(-np.log(vals)))
    return FitResult(slope, se, (lo, hi), res, target, float(np.exp(icpt)), None, len(lam))


def default_t_window(curve, t_min=10.0):
    eps = np.finfo(float).eps
    ok = curve.values >= 10 * eps
    ts = curve.t[ok & (curve.t >= t_min)]
    if len(ts) < 2:
        raise EmptyWindow("Laplace curve has no usable points beyond t_min")
    return float(ts[0]), float(ts[-1])


def laplace_exponent_fit(curve, t_window=None, target=None):
    """Slope of log(-log L) against log t; also the prefactor with the exponent fixed at ``target``."""
    t = np.asarray(curve.t if hasattr(curve, "t") else curve[0], dtype=float)
    v = np.asarray(curve.values if hasattr(curve, "values") else curve[1], dtype=float)
    if t_window is None:
        t_window = default_t_window(LaplaceCurve(t, v, np.zeros_like(v)))
    lo, hi = t_window
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    if sel.sum() < 2:
        raise EmptyWindow(f"fewer than two curve points in {t_window}")
    tt, vv = t[sel], v[sel]
    if np.any(vv <= 0) or np.any(vv >= 1):
        raise NonpositiveIDS("Laplace values must lie in (0, 1) on the fit window")
    x, y = np.log(tt), np.log(-np.log(vv))
    slope, icpt, se, res = _linfit(x, y)
    fixed = float(np.exp(np.mean(y - target * x))) if target is not None else None
    return FitResult(slope, se, (lo, hi), res, target, float(np.exp(icpt)), fixed, int(sel.sum()))

"""Catalog of Bernstein functions used as Laplace exponents of subordinators.

Families:
    drift          b * lam
    stable         lam ** s, 0 < s <= 1
    relativistic   (lam + mass ** (d_w / theta)) ** (theta / d_w) - mass
    gamma          log(1 + lam)
    mixture        sum of components
    tabulated      log-log interpolation of user samples (screened only)
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FitUnstable, InvalidParameters

FAMILIES = ("drift", "stable", "relativistic", "gamma", "mixture", "tabulated")


@dataclass(frozen=True)
class BernsteinFunction:
    family: str
    b: float = 1.0
    s: float = 1.0
    theta: float | None = None
    mass: float = 1.0
    d_w: float | None = None
    components: tuple = ()
    table: tuple = field(default=(), repr=False)

    def __post_init__(self):
        f = self.family
        if f not in FAMILIES:
            raise InvalidParameters(f"unknown family {f!r}")
        if f == "drift" and not self.b > 0:
            raise InvalidParameters("drift coefficient must be positive")
        if f == "stable" and not 0 < self.s <= 1:
            raise InvalidParameters("stable exponent must lie in (0, 1]")
        if f == "relativistic":
            if self.d_w is None or self.theta is None:
                raise InvalidParameters("relativistic family needs theta and d_w")
            if not 0 < self.theta < self.d_w:
                raise InvalidParameters("theta must lie in (0, d_w)")
            if not self.mass > 0:
                raise InvalidParameters("mass must be positive")
        if f == "mixture":
            if not self.components:
                raise InvalidParameters("mixture needs at least one component")
            object.__setattr__(self, "components", tuple(self.components))
        if f == "tabulated":
            lam, val = (np.asarray(a, dtype=float) for a in self.table)
            if lam.ndim != 1 or lam.shape != val.shape or len(lam) < 2:
                raise InvalidParameters("table needs two equal-length 1-d sample arrays")
            if np.any(lam <= 0) or np.any(np.diff(lam) <= 0) or np.any(val <= 0):
                raise InvalidParameters("table abscissae must increase and all samples be positive")
            object.__setattr__(self, "table", (tuple(lam), tuple(val)))

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls):
        return cls("drift", b=1.0)

    @classmethod
    def drift(cls, b):
        return cls("drift", b=b)

    @classmethod
    def stable(cls, s):
        return cls("stable", s=s)

    @classmethod
    def relativistic(cls, theta, mass, d_w):
        return cls("relativistic", theta=theta, mass=mass, d_w=d_w)

    @classmethod
    def gamma(cls):
        return cls("gamma")

    @classmethod
    def mixture(cls, *components):
        return cls("mixture", components=tuple(components))

    @classmethod
    def tabulated(cls, lam, values):
        return cls("tabulated", table=(tuple(lam), tuple(values)))

    # -- evaluation --------------------------------------------------------

    def __call__(self, lam):
        return evaluate(self, lam)

    def to_dict(self):
        f = self.family
        if f == "drift":
            return {"family": f, "b": self.b}
        if f == "stable":
            return {"family": f, "s": self.s}
        if f == "relativistic":
            return {"family": f, "theta": self.theta, "mass": self.mass, "d_w": self.d_w}
        if f == "gamma":
            return {"family": f}
        if f == "mixture":
            return {"family": f, "components": [c.to_dict() for c in self.components]}
        return {"family": f, "table": [list(self.table[0]), list(self.table[1])]}

    @classmethod
    def from_dict(cls, data, d_w=None):
        data = dict(data)
        f = data.pop("family", None)
        if f == "identity":
            return cls.identity()
        if f == "mixture":
            return cls.mixture(*(cls.from_dict(c, d_w) for c in data["components"]))
        if f == "relativistic":
            dw = data.get("d_w", d_w)
            theta = data.get("theta")
            if theta is None and "theta_over_dw" in data and dw is not None:
                theta = data["theta_over_dw"] * dw
            return cls.relativistic(theta, data.get("mass", 1.0), dw)
        if f == "tabulated":
            return cls.tabulated(*data["table"])
        allowed = {"drift": {"b"}, "stable": {"s"}, "gamma": set()}
        if f not in allowed:
            raise InvalidParameters(f"unknown family {f!r}")
        unknown = set(data) - allowed[f]
        if unknown:
            raise InvalidParameters(f"unknown keys for {f}: {sorted(unknown)}")
        return cls(f, **data)

    def descriptor(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def evaluate(phi, lam):
    """phi(lam) for a scalar or array of nonnegative reals."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(np.isnan(lam)):
        raise InvalidParameters("phi is defined for nonnegative arguments only")
    f = phi.family
    if f == "drift":
        out = phi.b * lam
    elif f == "stable":
        out = lam ** phi.s
    elif f == "relativistic":
        p = phi.theta / phi.d_w
        shift = phi.mass ** (1.0 / p)
        # (lam + shift)^p - shift^p, written to avoid cancellation near 0
        out = shift ** p * np.expm1(p * np.log1p(lam / shift))
    elif f == "gamma":
        out = np.log1p(lam)
    elif f == "mixture":
        out = sum(np.asarray(evaluate(c, lam), dtype=float) for c in phi.components)
    else:
        out = _tabulated(phi, lam)
    return out if out.ndim else float(out)


def _tabulated(phi, lam):
    x = np.log(np.asarray(phi.table[0]))
    y = np.log(np.asarray(phi.table[1]))
    lo = (y[1] - y[0]) / (x[1] - x[0])
    hi = (y[-1] - y[-2]) / (x[-1] - x[-2])
    out = np.zeros_like(lam)
    pos = lam > 0
    t = np.log(lam[pos])
    v = np.interp(t, x, y)
    v = np.where(t < x[0], y[0] + lo * (t - x[0]), v)
    v = np.where(t > x[-1], y[-1] + hi * (t - x[-1]), v)
    out[pos] = np.exp(v)
    return out


def screen(phi, lam=None, tol=1e-12):
    """Sampled monotonicity and concavity screen (necessary conditions only)."""
    if lam is None:
        lam = np.linspace(0.0, 10.0, 2001)
    v = evaluate(phi, lam)
    d1 = np.diff(v)
    d2 = np.diff(v, 2)
    scale = max(1.0, float(np.abs(v).max()))
    return {
        "phi_at_zero": float(evaluate(phi, 0.0)),
        "nondecreasing": bool(np.all(d1 >= -tol * scale)),
        "concave": bool(np.all(d2 <= tol * scale)),
        "status": "screened, not certified",
    }


@dataclass(frozen=True)
class ExponentReport:
    alpha: float
    C1: float
    C2: float
    window: tuple
    decade_slopes: tuple

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "C1": self.C1,
            "C2": self.C2,
            "window": list(self.window),
            "decade_slopes": list(self.decade_slopes),
        }


def low_energy_exponent(phi, d_w, lam0=1e-2, decades=4, per_decade=40, drift_tol=0.05):
    """alpha = d_w * (log-log slope of phi on a geometric grid below lam0).

    Also returns the sandwich constants C1 <= phi / lam^(alpha/d_w) <= C2 on
    the grid.  Raises FitUnstable when the per-decade slopes drift by more
    than ``drift_tol`` relative to the overall slope.
    """
    if not lam0 > 0:
        raise InvalidParameters("lam0 must be positive")
    lam = lam0 * np.logspace(-decades, 0, decades * per_decade + 1)
    v = evaluate(phi, lam)
    if np.any(v <= 0):
        raise FitUnstable("phi vanishes on the fitting grid")
    x, y = np.log(lam), np.log(v)
    slope = np.polyfit(x, y, 1)[0]
    slopes = []
    for j in range(decades):
        sl = slice(j * per_decade, (j + 1) * per_decade + 1)
        slopes.append(float(np.polyfit(x[sl], y[sl], 1)[0]))
    if (max(slopes) - min(slopes)) > drift_tol * abs(slope):
        raise FitUnstable(f"slope drifts across decades: {slopes}")
    ratio = v / lam ** slope
    return ExponentReport(float(d_w * slope), float(ratio.min()), float(ratio.max()), (float(lam[0]), float(lam0)), tuple(slopes))


def check_assumption_B(phi, d_w, threshold=1.0, lam0=1e-2):
    """Numeric screen of the growth condition at infinity and the low-energy sandwich."""
    lam = 10.0 ** np.arange(2, 13)
    ratio = evaluate(phi, lam) / np.log(lam)
    increasing = bool(np.all(np.diff(ratio) > 0))
    growth_ok = increasing and ratio[-1] > threshold
    try:
        rep = low_energy_exponent(phi, d_w, lam0)
        low_ok = 0 < rep.alpha <= d_w * (1 + 1e-9)
        low = rep.to_dict()
    except FitUnstable as exc:
        low_ok, low = False, {"error": str(exc)}
    return {
        "growth": {"lam": lam.tolist(), "ratio": ratio.tolist(), "increasing": increasing, "pass": bool(growth_ok)},
        "low_energy": dict(low, **{"pass": bool(low_ok)}),
        "screen": screen(phi),
        "pass": bool(growth_ok and low_ok),
    }

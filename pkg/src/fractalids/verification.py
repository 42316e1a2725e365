"""Bound-suite checks: Temple soundness, alloy domination chain, tail bounds, vacancy comparison."""
from __future__ import annotations

import numpy as np
from scipy import linalg

from .environment import (
    alloy_potential,
    diminished_potential,
    occupancy_indicators,
    periodize_potential,
    sample_configuration,
)
from .errors import InvalidParameters
from .ids import (
    bernstein_tail_bound,
    binomial_tail,
    lemma33_bound,
    lemma34_check,
    temple_bound,
    vacancy_lower_bound,
    window_select,
)
from .spectral import neumann_schrodinger, reference_gap_constant, unit_dirichlet_eigenvalue


def random_temple_instance(rng, n=None):
    """Random symmetric H, unit trial vector near the ground state, and a valid eta."""
    n = int(rng.integers(2, 12)) if n is None else n
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.sort(rng.uniform(-2.0, 5.0, n))
    if n > 1 and lam[1] - lam[0] < 1e-3:
        lam[1] = lam[0] + 1e-3
    H = (Q * lam) @ Q.T
    H = 0.5 * (H + H.T)
    psi = Q[:, 0] + rng.uniform(0.0, 0.4) * rng.standard_normal(n) / np.sqrt(n)
    psi /= np.linalg.norm(psi)
    e = float(psi @ H @ psi)
    hi = lam[1] if n > 1 else e + 1.0
    if e >= hi:
        return None
    eta = rng.uniform(e, hi)
    if eta <= e:
        return None
    return H, eta, psi


def temple_soundness(count=500, seed=0, tol=1e-10):
    """Count violations of bound <= lambda_1 over ``count`` valid random instances."""
    rng = np.random.default_rng(seed)
    done, violations, worst = 0, 0, -np.inf
    while done < count:
        inst = random_temple_instance(rng)
        if inst is None:
            continue
        H, eta, psi = inst
        b = temple_bound(H, eta, psi)
        lam1 = float(linalg.eigvalsh(H)[0])
        worst = max(worst, b - lam1)
        violations += b > lam1 + tol
        done += 1
    return {"instances": done, "violations": int(violations), "max_excess": float(worst), "pass": violations == 0}


def bernstein_dominance(n_max=30, p_grid=None, gamma_grid=None, tol=1e-15):
    """Check the Bernstein tail bound against the exact binomial tail on a grid."""
    p_grid = np.linspace(0.05, 0.9, 18) if p_grid is None else p_grid
    gamma_grid = np.linspace(0.1, 0.95, 18) if gamma_grid is None else gamma_grid
    checked, bad = 0, []
    for n in range(1, n_max + 1):
        for p in p_grid:
            for g in gamma_grid:
                if not p < g:
                    continue
                b = bernstein_tail_bound(n, p, g)
                e = binomial_tail(n, p, g)
                checked += 1
                if e > b * (1 + 1e-12) + tol:
                    bad.append({"n": n, "p": float(p), "gamma": float(g), "bound": b, "exact": e})
    return {"checked": checked, "violations": bad, "pass": not bad}


def alloy_chain(system, labeling, phi, alpha, tau, profile, nu, M, m, samples, seed, delta=0.3, M_ref=2, fault_scale=None):
    """Per-sample domination chain and the Lemma 3.3 / 3.4 assertions.

    ``fault_scale`` multiplies the alloy eigenvalue before the Lemma 3.4
    check; it exists only to exercise failure reporting.
    """
    if m >= profile.m_0:
        # every grid vertex would lie on the excised m_0-grid, leaving the alloy potential zero
        raise InvalidParameters(f"alloy reduction needs m < m_0 (m={m}, m_0={profile.m_0})")
    L = system.L
    C1 = reference_gap_constant(system, labeling, phi, tau, alpha, M_ref, m)
    C1_check = reference_gap_constant(system, labeling, phi, tau, alpha, M_ref + 1, m)
    g = system.build_graph(M, m)
    A0 = profile.A_0
    chain_viol, l33_viol, pairs, rows = [], [], [], []
    for i in range(samples):
        conf = sample_configuration(nu, M, profile.m_0, seed, N=system.N, index=(M, i))
        VM = periodize_potential(conf, profile, M, g, labeling)
        occ = occupancy_indicators(conf, profile.m_0)
        Vbar = alloy_potential(occ, A0, M, g)
        Vt = diminished_potential(Vbar, C1, A0, M, alpha, L)
        lt, lb, lm = (
            float(linalg.eigvalsh(neumann_schrodinger(system, labeling, M, m, phi, V, tau).matrix)[0])
            for V in (Vt, Vbar, VM)
        )
        bound = lemma33_bound(Vt, M, C1, alpha, L)
        frac = float(occ.bits.mean())
        if not (lt <= lb + 1e-10 and lb <= lm + 1e-10):
            chain_viol.append({"sample": i, "lambda_tilde": lt, "lambda_bar": lb, "lambda_M": lm})
        if bound > lt + 1e-10:
            l33_viol.append({"sample": i, "bound": bound, "lambda_tilde": lt})
        pairs.append((frac, lb * (fault_scale if fault_scale is not None else 1.0)))
        rows.append({"sample": i, "fraction": frac, "lambda_tilde": lt, "lambda_bar": lb, "lambda_M": lm, "lemma33": bound})
    l34 = lemma34_check(pairs, delta, M, C1, alpha, L)
    return {
        "C1": C1,
        "C1_cross_check": C1_check,
        "samples": samples,
        "chain_violations": chain_viol,
        "lemma33_violations": l33_viol,
        "lemma34": l34,
        "rows": rows,
        "pass": not chain_viol and not l33_viol and l34["pass"],
    }


def vacancy_comparison(curve, system, phi, alpha, tau, nu, M_0, t_points, sigmas=2.0, ratio=1.0, unit_depth=5):
    """Compare a measured annealed Laplace curve with the vacancy lower bound."""
    if system.d_w is None:
        raise InvalidParameters("system needs a walk dimension")
    lam1 = unit_dirichlet_eigenvalue(system, tau, unit_depth)
    rows = []
    for t in t_points:
        v, se = curve.at(t)
        M = max(window_select(t, nu, system.d, alpha, ratio, system.L), M_0)
        b = vacancy_lower_bound(nu, M, M_0, system.c1_geom, lam1, phi, t, system.L, system.d, system.d_w)
        rows.append({"t": float(t), "value": v, "stderr": se, "M": M, "bound": b, "ok": bool(v + sigmas * se >= b)})
    return {"lambda1_unit": lam1, "rows": rows, "pass": all(r["ok"] for r in rows)}

"""Slow, independent checks for the solvers.

The brute-force searches enumerate every subchannel assignment and grid
the continuous variables; they share nothing with the solvers except the
``objective`` module. ``kkt_residuals`` checks first-order optimality of a
returned solution by finite differences.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import Allocation, InstanceTooLarge, Scenario
from .objective import ce_report, lemma1_residuals, user_powers, user_rates

__all__ = ["GridSpec", "OracleResult", "KktReport",
           "brute_force_partial", "brute_force_binary", "kkt_residuals"]

_MAX_K, _MAX_N = 3, 4
_CHUNK = 2_000_000
# grid points one user may have to visit when it holds every subchannel
_MAX_USER_EVALS = 2_000_000_000


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution: ``points`` log-spaced values per continuous variable plus an exact 0.

    Powers span [P^th * span, P^th], frequencies [f_max * span, f_max].
    """

    points: int = 200
    span: float = 1e-6


@dataclass
class OracleResult:
    ce: float
    allocation: Optional[Allocation]
    feasible: bool
    evaluations: int = 0


def _power_grid(pth: float, g: GridSpec) -> np.ndarray:
    return np.concatenate(([0.0], np.geomspace(pth * g.span, pth, g.points)))


def _freq_grid(fmax: float, g: GridSpec) -> np.ndarray:
    if fmax <= 0:
        return np.zeros(1)
    return np.concatenate(([0.0], np.geomspace(fmax * g.span, fmax, g.points)))


def _user_best(s: Scenario, k: int, chans: tuple, g: GridSpec, local: bool, offload: bool):
    """Grid maximum of user k's CE on channel set ``chans``.

    Returns (ce, powers on chans, f, evaluations); ce is -inf when no grid
    point satisfies the rate floor and power cap.
    """
    sp = s.system
    u = s.users[k]
    B, N0, zeta, pc = sp.bandwidth_per_subchannel, sp.noise_power, sp.amplifier_coeff, sp.circuit_power
    chans = chans if offload else ()
    pg = _power_grid(u.max_power, g)
    if chans:
        mesh = np.meshgrid(*([pg] * len(chans)), indexing="ij")
        P_each = np.stack([m.ravel() for m in mesh], axis=1)  # combos x m
    else:
        P_each = np.zeros((1, 0))
    h = s.gains[k, list(chans)] if chans else np.zeros(0)
    r_off = B * np.sum(np.log2(1.0 + P_each * h / N0), axis=1)
    p_off = zeta * np.sum(P_each, axis=1)
    keep = p_off + pc <= u.max_power
    P_each, r_off, p_off = P_each[keep], r_off[keep], p_off[keep]

    fg = _freq_grid(u.max_cpu_freq, g) if local else np.zeros(1)
    r_loc = fg / u.cycles_per_bit
    p_loc = u.chip_coeff * fg ** 3

    best = (-np.inf, None, 0.0)
    evals = 0
    step = max(1, _CHUNK // max(len(fg), 1))
    for start in range(0, len(r_off), step):
        ro = r_off[start:start + step, None]
        po = p_off[start:start + step, None]
        R = ro + r_loc[None, :]
        P = po + p_loc[None, :] + pc
        ok = (R >= u.min_bits_rate) & (P <= u.max_power)
        ce = np.where(ok, u.weight * R / P, -np.inf)
        evals += ce.size
        i = int(np.argmax(ce))
        if ce.flat[i] > best[0]:
            a, b = np.unravel_index(i, ce.shape)
            best = (float(ce.flat[i]), P_each[start + a].copy(), float(fg[b]))
    return best[0], best[1], best[2], evals


def _check_size(s: Scenario, grid: GridSpec):
    K, N = s.gains.shape
    if K > _MAX_K or N > _MAX_N:
        raise InstanceTooLarge(f"oracle supports K <= {_MAX_K}, N <= {_MAX_N}; got K={K}, N={N}")
    evals = (grid.points + 1) ** (N + 1)
    if evals > _MAX_USER_EVALS:
        raise InstanceTooLarge(
            f"{grid.points} points per variable needs {evals:.3g} evaluations per user at N={N}; "
            f"use a coarser grid")


def _search(s: Scenario, grid: GridSpec, binary: bool) -> OracleResult:
    _check_size(s, grid)
    K, N = s.gains.shape
    cache = {}

    def value(k, chans):
        key = (k, chans)
        if key not in cache:
            if binary:
                loc = _user_best(s, k, (), grid, local=True, offload=False)
                off = _user_best(s, k, chans, grid, local=False, offload=True)
                # ties go to offloading, as in the mode rule
                cache[key] = (off, 1) if off[0] >= loc[0] else (loc, 0)
            else:
                cache[key] = (_user_best(s, k, chans, grid, local=True, offload=True), None)
        return cache[key]

    best_ce, best_alloc = -np.inf, None
    evals = 0
    # owner[n] in {-1, 0..K-1}: -1 leaves subchannel n unassigned
    for owner in itertools.product(range(-1, K), repeat=N):
        total = 0.0
        parts = []
        for k in range(K):
            chans = tuple(n for n in range(N) if owner[n] == k)
            (ce, p, f, _), mu = value(k, chans)
            total += ce
            parts.append((chans, p, f, mu))
            if total == -np.inf:
                break
        if total > best_ce:
            best_ce = total
            rho = np.zeros((K, N))
            pw = np.zeros((K, N))
            fr = np.zeros(K)
            mode = np.zeros(K) if binary else None
            for k, (chans, p, f, mu) in enumerate(parts):
                for j, n in enumerate(chans):
                    rho[k, n] = 1
                    pw[k, n] = p[j] if p is not None and len(p) else 0.0
                fr[k] = f
                if binary:
                    mode[k] = mu
            best_alloc = Allocation(rho, pw, fr, mode)
    evals = sum(v[0][3] for v in cache.values())
    if not np.isfinite(best_ce):
        return OracleResult(-np.inf, None, False, evals)
    # report through the shared objective so both sides use one evaluator
    ce = ce_report(s, best_alloc, "binary" if binary else "partial").weighted_sum_ce
    return OracleResult(ce, best_alloc, True, evals)


def brute_force_partial(s: Scenario, grid: GridSpec = GridSpec()) -> OracleResult:
    """Exhaustive assignment enumeration with gridded powers and frequencies."""
    return _search(s, grid, binary=False)


def brute_force_binary(s: Scenario, grid: GridSpec = GridSpec()) -> OracleResult:
    """As :func:`brute_force_partial`, additionally choosing each user's mode."""
    return _search(s, grid, binary=True)


# -- first-order optimality -------------------------------------------------

@dataclass
class KktReport:
    stationarity: float  # max relative |dL/dx| over interior variables (and sign violations on bounds)
    complementary_slackness: dict = field(default_factory=dict)
    lemma1: tuple = (np.nan, np.nan)
    details: list = field(default_factory=list)

    @property
    def max_slackness(self) -> float:
        return max(self.complementary_slackness.values(), default=0.0)


def _lagrangian_terms(s: Scenario, alloc: Allocation, k: int):
    binary = alloc.mode is not None
    R = user_rates(s, alloc, binary)[k]
    P = user_powers(s, alloc, binary)[k]
    return R, P


def kkt_residuals(s: Scenario, solution, rel_step: float = 1e-6) -> KktReport:
    """Finite-difference stationarity and complementary slackness at a solution.

    The Lagrangian per user is ``(lam w + alpha) R - (lam beta + varsigma) P
    - upsilon f`` (constants dropped). Derivatives are taken by central
    differences on the shared objective, with a relative step. A variable
    sitting at a bound only counts when its derivative points outward.

    Binary solutions (``allocation.mode`` set) use ``psi``, ``phi``,
    ``vartheta`` and ``chi`` in place of ``lam``, ``beta``, ``alpha`` and
    ``varsigma``; only the variables of each user's chosen mode are checked.
    """
    a = solution.allocation
    d = solution.duals
    binary = a.mode is not None
    w = s.user_array("weight")
    rth = s.user_array("min_bits_rate")
    pth = s.user_array("max_power")
    fmax = s.user_array("max_cpu_freq")
    if binary:
        lam, beta, alpha, varsigma = d.psi, d.phi, d.vartheta, d.chi
        mu = np.asarray(a.mode)
    else:
        lam, beta, alpha, varsigma = d.lam, d.beta, d.alpha, d.varsigma
        mu = np.full(s.num_users, -1)
    ra = lam * w + alpha
    pb = lam * beta + varsigma
    K, N = s.gains.shape
    worst = 0.0
    details = []

    def lag(alloc, k):
        R, P = _lagrangian_terms(s, alloc, k)
        return ra[k] * R - pb[k] * P - d.upsilon[k] * alloc.cpu_freq[k]

    def deriv(k, setter, x):
        h = rel_step * max(abs(x), 1e-12)
        lo = max(x - h, 0.0)
        hi = x + h
        Lp = lag(setter(hi), k)
        Lm = lag(setter(lo), k)
        Rp, Pp = _lagrangian_terms(s, setter(hi), k)
        Rm, Pm = _lagrangian_terms(s, setter(lo), k)
        scale = (abs(ra[k] * (Rp - Rm)) + abs(pb[k] * (Pp - Pm))) / (hi - lo)
        return (Lp - Lm) / (hi - lo), scale

    for k in range(K):
        for n in range(N):
            if not a.assignment[k, n] or mu[k] == 0:
                continue
            x = a.power[k, n]

            def set_p(v, k=k, n=n):
                p = a.power.copy()
                p[k, n] = v
                return Allocation(a.assignment, p, a.cpu_freq, a.mode)

            if x > 0:
                g, sc = deriv(k, set_p, x)
                r = abs(g) / sc if sc > 0 else abs(g)
            else:
                # at p = 0 only an increasing Lagrangian violates optimality
                g, sc = deriv(k, set_p, 1e-12 * pth[k])
                r = max(g, 0.0) / sc if sc > 0 else max(g, 0.0)
            details.append(("p", k, n, r))
            worst = max(worst, r)
        if fmax[k] > 0 and mu[k] != 1:
            x = a.cpu_freq[k]

            def set_f(v, k=k):
                f = a.cpu_freq.copy()
                f[k] = v
                return Allocation(a.assignment, a.power, f, a.mode)

            g, sc = deriv(k, set_f, max(x, 1e-12 * fmax[k]))
            if x <= 0:
                r = max(g, 0.0)
            else:
                r = abs(g)
            r = r / sc if sc > 0 else r
            details.append(("f", k, None, r))
            worst = max(worst, r)

    R = user_rates(s, a, binary)
    P = user_powers(s, a, binary)
    cs = {
        "alpha": float(np.max(np.abs(alpha * (R - rth)) / np.maximum(ra * np.maximum(rth, 1.0), 1e-300))),
        "varsigma": float(np.max(np.abs(varsigma * (pth - P)) / np.maximum(pb * pth, 1e-300))),
        "upsilon": float(np.max(np.abs(d.upsilon * (fmax - a.cpu_freq)) / np.maximum(ra / s.user_array("cycles_per_bit") * np.maximum(fmax, 1.0), 1e-300))),
    }
    return KktReport(worst, cs, lemma1_residuals(s, a, lam, beta, binary), details)

"""Comparison schemes, each returning a :class:`PartialSolution`.

* offloading only: the proposed machinery with every CPU switched off;
* local computing only: closed-form CPU frequency, no subchannels;
* computation-bits maximisation: maximise sum_k omega_k R_k under the same
  constraints, i.e. every user spends its whole power budget;
* energy minimisation: minimise sum_k P_k subject to the rate floors, i.e.
  every user stops at the cheapest allocation meeting R_k^th.

All schemes run in partial mode by default. With ``mode="binary"`` each
user instead commits to one of offloading or local computing.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .model import Allocation, DualState, InfeasibleInstance, Scenario, SolveTrace, validate_scenario
from .objective import ce_report, user_powers, user_rates
from .solver_binary import binary_precheck
from .solver_partial import (
    PartialSolution,
    SolverConfig,
    _channel_price,
    _exact_duals,
    _owner,
    _rho_from_owner,
    assign_subchannels,
    channel_indicator,
    feasibility_precheck,
    local_search,
    optimal_power,
    parametric_loop,
    recover_primal,
)
from .waterfill import LevelBounds, UserCurve

__all__ = [
    "SCHEMES",
    "solve_offloading_only",
    "solve_local_only",
    "solve_cb_max",
    "solve_ec_min",
    "local_only_frequency",
]

_MAX_SETTLE = 50


def _check_mode(mode: str) -> bool:
    if mode not in ("partial", "binary"):
        raise ValueError(f"mode must be 'partial' or 'binary', got {mode!r}")
    return mode == "binary"


def _with_modes(sol: PartialSolution, s: Scenario, mu) -> PartialSolution:
    a = sol.allocation
    alloc = Allocation(a.assignment, a.power, a.cpu_freq, mode=np.asarray(mu, dtype=np.int8))
    return PartialSolution(alloc, ce_report(s, alloc, "binary"), sol.duals, sol.trace,
                           sol.converged, sol.outer_iters, sol.inner_iters, sol.scheme)


# -- offloading only --------------------------------------------------------

def solve_offloading_only(s: Scenario, cfg: SolverConfig = SolverConfig(), mode: str = "partial") -> PartialSolution:
    """CE maximisation with every CPU frequency forced to zero.

    Raises
    ------
    InfeasibleInstance
        If some rate floor cannot be met by offloading alone.
    """
    binary = _check_mode(mode)
    validate_scenario(s)
    feasibility_precheck(s, use_local=False)
    sol = parametric_loop(s, cfg, use_local=False, scheme="offload-only")
    return _with_modes(sol, s, np.ones(s.num_users)) if binary else sol


# -- local computing only ----------------------------------------------------

def local_only_frequency(s: Scenario, k: int) -> float:
    """CE-maximising CPU frequency of user k computing everything locally.

    The unconstrained stationary point of (f/C) / (eps f^3 + p_c) is
    f* = (p_c / (2 eps))^(1/3); it is clipped into the interval allowed by
    the rate floor (f >= R^th C), the power cap and f_max.
    """
    u = s.users[k]
    pc = s.system.circuit_power
    lo = u.min_bits_rate * u.cycles_per_bit
    hi = u.max_cpu_freq
    if u.max_power < pc:
        hi = -math.inf
    else:
        hi = min(hi, ((u.max_power - pc) / u.chip_coeff) ** (1.0 / 3.0))
    if lo > hi:
        raise InfeasibleInstance(
            f"user {k}: local computing tops out at {max(hi, 0.0) / u.cycles_per_bit:.6g} bit/s, "
            f"below the floor {u.min_bits_rate:.6g}")
    f_star = (pc / (2.0 * u.chip_coeff)) ** (1.0 / 3.0)
    return min(max(f_star, lo), hi)


def solve_local_only(s: Scenario, cfg: SolverConfig = SolverConfig(), mode: str = "partial") -> PartialSolution:
    """No offloading: every user runs the CE-optimal local frequency."""
    binary = _check_mode(mode)
    validate_scenario(s)
    K, N = s.gains.shape
    f = np.array([local_only_frequency(s, k) for k in range(K)])
    rho = np.zeros((K, N), dtype=np.int8)
    alloc = Allocation(rho, np.zeros((K, N)), f)
    # parametric duals at this fixed point, for reporting
    lam = 1.0 / user_powers(s, alloc)
    beta = s.user_array("weight") * user_rates(s, alloc) * lam
    rec = recover_primal(s, rho, lam, beta, use_local=True)
    _, duals = _exact_duals(s, rho, lam, beta, rec)
    sol = PartialSolution(alloc, ce_report(s, alloc), duals, SolveTrace(), True, 0, 0, "local-only")
    return _with_modes(sol, s, np.zeros(K)) if binary else sol


# -- fixed-level schemes (CB-max, EC-min) ------------------------------------

def _precheck(s: Scenario, binary: bool) -> None:
    if binary:
        binary_precheck(s)
    else:
        feasibility_precheck(s)


class _LevelScheme:
    """A scheme where, for a given channel set, each user sits at one level of its curve.

    ``pick(curve, bounds)`` returns that level; ``value(rate, power, weight)``
    is the user's contribution to the scheme objective (to be maximised);
    ``price(level, weight)`` is the rate price that goes with it when the
    power price is normalised so that ``level = rate_price / power_price``.
    """

    def __init__(self, s: Scenario, pick: Callable, value: Callable, price: Callable, binary: bool):
        self.s = s
        self.pick = pick
        self.value = value
        self.price = price
        self.binary = binary
        self._cache: dict[tuple, tuple] = {}

    def _single(self, k: int, chans: tuple, local: bool):
        u = self.s.users[k]
        curve = UserCurve(self.s.system, u, self.s.gains[k, list(chans)], use_local=local)
        b = curve.bounds()
        t = self.pick(curve, b)
        feas = b.feasible
        R, P = curve.rate(t), curve.power(t)
        return feas, self.value(R, P, u.weight), t, curve

    def user(self, k: int, chans: tuple):
        """(feasible, value, level, curve, mode) of user k on ``chans``."""
        key = (k, chans)
        if key not in self._cache:
            if not self.binary:
                self._cache[key] = self._single(k, chans, True) + (1,)
            else:
                off = self._single(k, chans, False)
                loc = self._single(k, (), True)
                better_local = (loc[0], loc[1]) > (off[0], off[1])
                self._cache[key] = loc + (0,) if better_local else off + (1,)
        return self._cache[key]

    def score(self, owner: tuple) -> tuple[int, float]:
        ok, total = 0, 0.0
        for k in range(self.s.num_users):
            feas, v, *_ = self.user(k, tuple(n for n, o in enumerate(owner) if o == k))
            ok += feas
            total += v
        return ok, total

    def indicator(self, owner: tuple) -> np.ndarray:
        """Channel indicator H at the levels each user takes under ``owner``."""
        s = self.s
        K, N = s.gains.shape
        H = np.empty((K, N))
        for k in range(K):
            _, _, t, *_ = self.user(k, tuple(n for n, o in enumerate(owner) if o == k))
            if not math.isfinite(t) or t <= 0:
                H[k] = 0.0
                continue
            a = self.price(t, s.users[k].weight)
            z = optimal_power(a, a / t, s.system, s.gains[k])
            H[k] = channel_indicator(a, s.system, z, s.gains[k])
        return H

    def allocation(self, owner: tuple):
        s = self.s
        K, N = s.gains.shape
        p = np.zeros((K, N))
        f = np.zeros(K)
        mu = np.zeros(K, dtype=np.int8)
        levels = np.zeros(K)
        for k in range(K):
            chans = tuple(n for n, o in enumerate(owner) if o == k)
            _, _, t, curve, m = self.user(k, chans)
            mu[k] = m
            levels[k] = t
            if m and chans:
                p[k, list(chans)] = curve.powers(t)
            f[k] = curve.frequency(t)
        if self.binary:
            owner = tuple(o if o >= 0 and mu[o] else -1 for o in owner)
        rho = _rho_from_owner(owner, K)
        return Allocation(rho, p * rho, f, mode=mu if self.binary else None), levels


def _settle_assignment(scheme: _LevelScheme, owner: tuple, K: int) -> tuple[tuple, int]:
    """Alternate levels and argmax-H assignment until a fixed point (or a repeat)."""
    seen = {owner: scheme.score(owner)}
    it = 0
    for it in range(1, _MAX_SETTLE + 1):
        nxt = _owner(assign_subchannels(scheme.indicator(owner)))
        if nxt in seen:
            break
        seen[nxt] = scheme.score(nxt)
        owner = nxt
    best = max(seen, key=lambda o: seen[o])
    return best, it


def _run_level_scheme(s: Scenario, scheme: _LevelScheme, start: tuple, name: str,
                      dual_fn: Callable) -> PartialSolution:
    K = s.num_users
    owner, iters = _settle_assignment(scheme, start, K)
    owner = local_search(owner, K, scheme.score)
    alloc, levels = scheme.allocation(owner)
    report = ce_report(s, alloc, "binary" if scheme.binary else "partial")
    duals = dual_fn(alloc, levels)
    H = scheme.indicator(owner)
    duals = duals.update(xi=_channel_price(H))
    return PartialSolution(alloc, report, duals, SolveTrace(), report.all_feasible, 1, iters, name)


def _cap_level(curve: UserCurve, b: LevelBounds) -> float:
    t = b.high
    if math.isinf(t):
        t = curve.saturation_level
    return max(t, 0.0)


def solve_cb_max(s: Scenario, cfg: SolverConfig = SolverConfig(), mode: str = "partial") -> PartialSolution:
    """Maximise the weighted computed bits sum_k omega_k R_k.

    With no ratio in the objective (beta = 0) the power cap is what stops
    the water level rising: each user sits at the largest level its power
    budget allows on its subchannels. Subchannels are assigned by the
    argmax indicator at those levels and then polished by exact local
    search on the weighted bit sum.
    """
    binary = _check_mode(mode)
    validate_scenario(s)
    _precheck(s, binary)
    scheme = _LevelScheme(
        s,
        pick=_cap_level,
        value=lambda R, P, w: w * R,
        price=lambda t, w: w,
        binary=binary,
    )
    K, N = s.gains.shape
    # start from the levels each user would reach holding every subchannel
    start = _owner(assign_subchannels(_full_set_indicator(s, scheme)))

    def duals(alloc, levels):
        w = s.user_array("weight")
        varsigma = np.where(levels > 0, w / np.where(levels > 0, levels, 1.0), 0.0)
        return DualState.initial(K, N, lam=np.ones(K), varsigma=varsigma)

    return _run_level_scheme(s, scheme, start, "cb-max", duals)


def _full_set_indicator(s: Scenario, scheme: _LevelScheme) -> np.ndarray:
    K, N = s.gains.shape
    H = np.empty((K, N))
    for k in range(K):
        _, _, t, *_ = scheme.user(k, tuple(range(N)))
        if not math.isfinite(t) or t <= 0:
            H[k] = 0.0
            continue
        a = scheme.price(t, s.users[k].weight)
        z = optimal_power(a, a / t, s.system, s.gains[k])
        H[k] = channel_indicator(a, s.system, z, s.gains[k])
    return H


def solve_ec_min(s: Scenario, cfg: SolverConfig = SolverConfig(), mode: str = "partial") -> PartialSolution:
    """Minimise the total consumed power sum_k P_k subject to the rate floors.

    The rate floor is priced by a per-user multiplier alpha_k with the power
    price fixed at 1, so the water level equals alpha_k; the cheapest
    allocation is the smallest level meeting R_k^th (zero when R_k^th = 0).
    """
    binary = _check_mode(mode)
    validate_scenario(s)
    _precheck(s, binary)

    def floor_level(curve, b):
        return b.low if math.isfinite(b.low) else _cap_level(curve, b)

    scheme = _LevelScheme(
        s,
        pick=floor_level,
        value=lambda R, P, w: -P,
        price=lambda t, w: t,
        binary=binary,
    )
    K, N = s.gains.shape
    start = _owner(assign_subchannels(_full_set_indicator(s, scheme)))

    def duals(alloc, levels):
        return DualState.initial(K, N, alpha=np.where(np.isfinite(levels), levels, 0.0))

    return _run_level_scheme(s, scheme, start, "ec-min", duals)


SCHEMES = {
    "offload": solve_offloading_only,
    "local": solve_local_only,
    "cbmax": solve_cb_max,
    "ecmin": solve_ec_min,
}

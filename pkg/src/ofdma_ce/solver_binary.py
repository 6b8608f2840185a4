"""Weighted-sum CE maximisation with binary (all-or-nothing) offloading.

Each user either offloads its whole task (mu = 1, CPU idle) or computes it
locally (mu = 0, no subchannels). The parametric loop is the one used for
partial offloading, run on (psi, phi); every outer iteration picks modes by
comparing the two per-mode Lagrangian values F1 (offload) and F2 (local).
"""

from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np

from .model import (
    Allocation,
    DualState,
    InfeasibleInstance,
    IterationRecord,
    Scenario,
    SolveTrace,
    validate_scenario,
)
from .objective import LN2, ce_report, lemma1_residuals, user_powers, user_rates
from .solver_partial import (
    PartialSolution,
    SolverConfig,
    _better,
    _exact_duals,
    _owner,
    _rho_from_owner,
    _primal_change,
    _violation,
    fixed_assignment_solution,
    inner_dual_loop,
    local_search,
    recover_primal,
    update_lambda_beta,
)
from .waterfill import UserCurve

log = logging.getLogger(__name__)

__all__ = ["mode_indicators", "select_mode", "binary_precheck", "solve_binary"]


def mode_indicators(s: Scenario, duals: DualState, allocation: Allocation, k: int) -> tuple[float, float]:
    """Offload and local indicators (F1, F2) of user k.

    ``allocation`` carries the offload candidate in ``assignment``/``power``
    (the auxiliary powers x = rho p) and the local candidate in ``cpu_freq``.
    With rate price ``psi*omega + vartheta`` and power price
    ``psi*phi + chi``::

        F1 = rate_price * sum_n rho B log2(1 + x h / (rho N0)) - power_price * (zeta sum_n x + p_c)
        F2 = rate_price * f / C - power_price * (eps f^3 + p_c)

    Subchannels with rho = 0 contribute nothing.
    """
    if not 0 <= k < s.num_users:
        raise IndexError(f"user index {k} out of range for K={s.num_users}")
    sp = s.system
    u = s.users[k]
    ra = duals.psi[k] * u.weight + duals.vartheta[k]
    pb = duals.psi[k] * duals.phi[k] + duals.chi[k]
    rho = allocation.assignment[k].astype(float)
    x = allocation.power[k] * rho
    held = rho > 0
    snr = np.zeros_like(x)
    snr[held] = x[held] * s.gains[k, held] / (rho[held] * sp.noise_power)
    rate_off = sp.bandwidth_per_subchannel * float(np.sum(rho * np.log(1.0 + snr) / LN2))
    f = float(allocation.cpu_freq[k])
    F1 = ra * rate_off - pb * (sp.amplifier_coeff * float(np.sum(x)) + sp.circuit_power)
    F2 = ra * f / u.cycles_per_bit - pb * (u.chip_coeff * f ** 3 + sp.circuit_power)
    return F1, F2


def select_mode(F1: float, F2: float) -> int:
    """1 (offload) when F1 >= F2, else 0 (local)."""
    return 1 if F1 >= F2 else 0


def _local_feasible(s: Scenario, k: int) -> bool:
    u = s.users[k]
    f = u.min_bits_rate * u.cycles_per_bit
    return f <= u.max_cpu_freq and u.chip_coeff * f ** 3 + s.system.circuit_power <= u.max_power


def binary_precheck(s: Scenario) -> None:
    """Raise when some user can meet its rate floor in neither mode."""
    sp = s.system
    for k, u in enumerate(s.users):
        if _local_feasible(s, k):
            continue
        p_full = (u.max_power - sp.circuit_power) / sp.amplifier_coeff
        snr = p_full * s.gains[k] / sp.noise_power
        bound = sp.bandwidth_per_subchannel * float(np.sum(np.log(1.0 + snr) / LN2))
        if u.min_bits_rate > bound:
            raise InfeasibleInstance(
                f"user {k}: rate floor {u.min_bits_rate:.6g} bit/s unreachable offloading "
                f"(bound {bound:.6g}) or locally")


class _ModeScorer:
    """Exact CE of a (channel owner, mode) configuration, memoised per user."""

    def __init__(self, s: Scenario):
        self.s = s
        self._cache: dict[tuple, tuple[bool, float]] = {}

    def user(self, k: int, chans: tuple, mode: int) -> tuple[bool, float]:
        key = (k, chans if mode else (), mode)
        if key not in self._cache:
            u = self.s.users[k]
            gains = self.s.gains[k, list(chans)] if mode else np.zeros(0)
            curve = UserCurve(self.s.system, u, gains, use_local=not mode)
            b = curve.bounds()
            if not b.feasible:
                self._cache[key] = (False, 0.0)
            else:
                t = curve.best_ratio_level(u.weight, bounds=b)
                self._cache[key] = (True, u.weight * curve.rate(t) / curve.power(t))
        return self._cache[key]

    def best_mode(self, k: int, chans: tuple) -> tuple[int, tuple[bool, float]]:
        off = self.user(k, chans, 1)
        loc = self.user(k, (), 0)
        if _better(loc, off):
            return 0, loc
        return 1, off

    def score(self, owner: tuple, modes: tuple) -> tuple[int, float]:
        ok, total = 0, 0.0
        for k in range(self.s.num_users):
            chans = tuple(n for n, o in enumerate(owner) if o == k)
            feas, ce = self.user(k, chans, modes[k])
            ok += feas
            total += ce
        return ok, total

    def score_best(self, owner: tuple) -> tuple[tuple[int, float], tuple]:
        ok, total, modes = 0, 0.0, []
        for k in range(self.s.num_users):
            chans = tuple(n for n, o in enumerate(owner) if o == k)
            m, (feas, ce) = self.best_mode(k, chans)
            modes.append(m)
            ok += feas
            total += ce
        return (ok, total), tuple(modes)


def _rho_of(owner: tuple, modes: tuple, K: int) -> np.ndarray:
    # local users hold nothing
    return _rho_from_owner(tuple(o if o >= 0 and modes[o] else -1 for o in owner), K)


def _refine(s: Scenario, owner: tuple, scorer: _ModeScorer) -> tuple[tuple, tuple]:
    """Local search over subchannel owners, each user taking its better mode."""
    owner = local_search(owner, s.num_users, lambda o: scorer.score_best(o)[0])
    return owner, scorer.score_best(owner)[1]


def _binary_allocation(s: Scenario, rho, mu, psi, phi):
    rec = recover_primal(s, rho, psi, phi, use_local=(mu == 0))
    return Allocation(rho, rec.power, rec.cpu_freq, mode=mu), rec


def _binary_duals(s, rho, psi, phi, rec) -> DualState:
    _, d = _exact_duals(s, rho, psi, phi, rec)
    return d.update(lam=np.zeros_like(psi), beta=np.zeros_like(phi), alpha=np.zeros_like(psi),
                    varsigma=np.zeros_like(psi), psi=psi, phi=phi,
                    vartheta=rec.alpha, chi=rec.varsigma)


def solve_binary(s: Scenario, cfg: SolverConfig = SolverConfig(), refine: bool = True) -> PartialSolution:
    """Maximise the weighted-sum CE when every user offloads all or nothing.

    Per outer iteration: (1) assign subchannels as if every user offloaded;
    (2) choose each user's mode from its offload and local indicators,
    evaluated at the exact constrained optimum of each mode (so the rate
    and power prices vanish by complementary slackness and
    vartheta = chi = 0 in the comparison); (3) hand the subchannels of
    local users to the remaining offloaders; (4) damped update of
    (psi, phi). The same incumbent safeguard and final local search as in
    the partial solver apply.
    """
    validate_scenario(s)
    binary_precheck(s)
    K, N = s.gains.shape
    pc = s.system.circuit_power
    psi = np.full(K, 1.0 / pc)
    phi = np.zeros(K)
    scorer = _ModeScorer(s)
    incumbent: Optional[tuple] = None
    trace = SolveTrace()
    prev: Optional[Allocation] = None
    converged = False
    total_inner = 0
    warm = (None, None)
    outer = 0
    for outer in range(1, cfg.max_outer_iters + 1):
        inner = inner_dual_loop(s, psi, phi, cfg, warm[0], warm[1], use_local=False)
        total_inner += inner.iterations
        rho_all = inner.allocation.assignment

        off = recover_primal(s, rho_all, psi, phi, use_local=False)
        loc = recover_primal(s, np.zeros_like(rho_all), psi, phi, use_local=True)
        cand = Allocation(rho_all, off.power, loc.cpu_freq, mode=np.ones(K))
        cmp_duals = DualState.initial(K, N, psi=psi, phi=phi)
        mu = np.zeros(K, dtype=np.int8)
        for k in range(K):
            F1, F2 = mode_indicators(s, cmp_duals, cand, k)
            F1 = F1 if off.feasible[k] else -math.inf
            F2 = F2 if loc.feasible[k] else -math.inf
            mu[k] = select_mode(F1, F2)

        if np.any((mu == 0) & rho_all.any(axis=1)) and np.any(mu == 1):
            inner2 = inner_dual_loop(s, psi, phi, cfg, warm[0], warm[1], use_local=False,
                                     eligible=(mu == 1))
            total_inner += inner2.iterations
            rho = inner2.allocation.assignment
        else:
            rho = (rho_all * mu[:, None]).astype(np.int8)

        proposal = (_owner(rho), tuple(int(m) for m in mu))
        if not (incumbent is None or proposal == incumbent
                or _better(scorer.score(*proposal), scorer.score(*incumbent))):
            rho = _rho_of(*incumbent, K)
            mu = np.array(incumbent[1], dtype=np.int8)
        else:
            incumbent = proposal

        alloc, rec = _binary_allocation(s, rho, mu, psi, phi)
        duals = _binary_duals(s, rho, psi, phi, rec)
        report = ce_report(s, alloc, "binary")
        r1, r2 = lemma1_residuals(s, alloc, psi, phi, binary=True)
        lemma = max(r1, r2)
        trace.append(IterationRecord(outer, inner.iterations, report.weighted_sum_ce, duals,
                                     lemma, _violation(report, s, binary=True)))
        change = math.inf if prev is None else _primal_change(alloc, prev, s)
        if prev is not None and not np.array_equal(prev.mode, alloc.mode):
            change = math.inf
        log.debug("binary outer %d: ce=%.6g lemma=%.2e modes=%s", outer,
                  report.weighted_sum_ce, lemma, mu.tolist())
        if lemma < cfg.outer_tol and change < cfg.outer_tol:
            converged = True
            break
        prev = alloc
        warm = (rec.alpha, rec.varsigma)
        psi, phi = update_lambda_beta(s, alloc, psi, phi, cfg.damping, binary=True)

    if refine:
        owner, modes = _refine(s, _owner(alloc.assignment), scorer)
        rho = _rho_of(owner, modes, K)
        mu = np.array(modes, dtype=np.int8)
        if not (np.array_equal(rho, alloc.assignment) and np.array_equal(mu, alloc.mode)):
            a2, _, rec = fixed_assignment_solution(s, rho, use_local=(mu == 0))
            lam = 1.0 / user_powers(s, a2)
            psi, phi = lam, s.user_array("weight") * user_rates(s, a2) * lam
            alloc, rec = _binary_allocation(s, rho, mu, psi, phi)
            duals = _binary_duals(s, rho, psi, phi, rec)
            report = ce_report(s, alloc, "binary")
            r1, r2 = lemma1_residuals(s, alloc, psi, phi, binary=True)
            trace.append(IterationRecord(outer + 1, 0, report.weighted_sum_ce, duals,
                                         max(r1, r2), _violation(report, s, binary=True)))
    return PartialSolution(alloc, report, duals, trace, converged and report.all_feasible,
                           outer, total_inner, "proposed-binary")

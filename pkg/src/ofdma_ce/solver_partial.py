"""Weighted-sum computation-efficiency maximisation, partial offloading.

Outer loop: damped fixed point on the parametric pair (lambda, beta) that
turns the sum of ratios into the subtractive objective
``sum_k lambda_k (omega_k R_k - beta_k P_k)``.
Inner loop: closed-form water-filling power, cubic-cost CPU frequency and
per-subchannel argmax assignment, with projected subgradient steps on the
rate and power multipliers.

Sign convention: the rate floor R_k >= R_k^th enters the Lagrangian as
``alpha_k (R_k - R_k^th)`` so every multiplier is non-negative and the rate
price of user k is ``lambda_k omega_k + alpha_k``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    Allocation,
    CeReport,
    DegenerateDual,
    DualState,
    InfeasibleInstance,
    IterationRecord,
    Scenario,
    SolveTrace,
    SystemParams,
    UserParams,
    validate_scenario,
)
from .objective import LN2, ce_report, lemma1_residuals, user_powers, user_rates
from .waterfill import UserCurve

log = logging.getLogger(__name__)

# inner iterations without visiting a new assignment before giving up
_CYCLE_PATIENCE = 30

__all__ = [
    "SolverConfig",
    "PartialSolution",
    "optimal_power",
    "optimal_frequency",
    "channel_indicator",
    "assign_subchannels",
    "prices",
    "feasibility_precheck",
    "inner_dual_loop",
    "recover_primal",
    "update_lambda_beta",
    "neighbours",
    "local_search",
    "refine_assignment",
    "fixed_assignment_solution",
    "parametric_loop",
    "lemma1_residuals",
    "solve_partial",
]


@dataclass(frozen=True)
class SolverConfig:
    outer_tol: float = 1e-4
    inner_tol: float = 1e-4
    max_outer_iters: int = 50
    max_inner_iters: int = 200
    step0: float = 0.5
    step_decay: float = 0.6
    damping: float = 0.7

    def __post_init__(self):
        if not (self.outer_tol > 0 and self.inner_tol > 0):
            raise ValueError("tolerances must be > 0")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not self.step0 > 0:
            raise ValueError("step0 must be > 0")


@dataclass(frozen=True)
class PartialSolution:
    allocation: Allocation
    report: CeReport
    duals: DualState
    trace: SolveTrace = field(compare=False)
    converged: bool
    outer_iters: int = 0
    inner_iters: int = 0
    scheme: str = "proposed-partial"

    @property
    def weighted_sum_ce(self) -> float:
        return self.report.weighted_sum_ce


# -- closed forms -----------------------------------------------------------

def optimal_power(rate_price, power_price, sys: SystemParams, h):
    """Water-filling power ``[rate_price*B/(ln2*zeta*power_price) - N0/h]^+``.

    ``rate_price`` is lambda*omega + alpha, ``power_price`` is
    lambda*beta + varsigma. Broadcasts over arrays.
    """
    rate_price = np.asarray(rate_price, dtype=float)
    power_price = np.asarray(power_price, dtype=float)
    if np.any(power_price <= 0):
        raise DegenerateDual("power price lambda*beta + varsigma must be > 0")
    level = rate_price * sys.bandwidth_per_subchannel / (LN2 * sys.amplifier_coeff * power_price)
    p = np.maximum(level - sys.noise_power / np.asarray(h, dtype=float), 0.0)
    return p if p.ndim else float(p)


def optimal_frequency(rate_price, power_price, user: UserParams, upsilon=0.0):
    """CPU frequency ``sqrt([(rate_price/C - upsilon) / (3 power_price eps)]^+)`` clamped to f_max."""
    rate_price = np.asarray(rate_price, dtype=float)
    power_price = np.asarray(power_price, dtype=float)
    if np.any(power_price <= 0):
        raise DegenerateDual("power price lambda*beta + varsigma must be > 0")
    num = rate_price / user.cycles_per_bit - upsilon
    f = np.sqrt(np.maximum(num, 0.0) / (3.0 * power_price * user.chip_coeff))
    f = np.minimum(f, user.max_cpu_freq)
    return f if f.ndim else float(f)


def _log_gap(x):
    """``log(1 + x) - x / (1 + x)`` without cancellation for small ``x``."""
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = x.reshape(-1)
    out = np.log1p(x) - x / (1.0 + x)
    small = x < 1e-3
    if np.any(small):
        xs = x[small]
        # alternating series sum_{n>=2} (-1)^n (n-1)/n x^n
        ser = np.zeros_like(xs)
        for n in range(8, 1, -1):
            ser = ser * xs + (-1) ** n * (n - 1) / n
        out[small] = ser * xs * xs
    return out.reshape(shape)


def channel_indicator(rate_price, sys: SystemParams, z, h):
    """Allocation indicator H: the per-subchannel Lagrangian value at power ``z``.

    ``(rate_price) * B * (log2(1 + z h/N0) - z h / (ln2 (N0 + z h)))``
    """
    z = np.asarray(z, dtype=float)
    h = np.asarray(h, dtype=float)
    zh = z * h
    n0 = sys.noise_power
    g = _log_gap(zh / n0) / LN2
    out = np.asarray(rate_price, dtype=float) * sys.bandwidth_per_subchannel * g
    return out if out.ndim else float(out)


def assign_subchannels(H) -> np.ndarray:
    """Give each subchannel to its argmax-H user; ties go to the lowest index.

    Columns whose best H is not positive stay unassigned.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2:
        raise ValueError("H must be a K x N matrix")
    rho = np.zeros(H.shape, dtype=np.int8)
    if H.size == 0:
        return rho
    best = np.argmax(H, axis=0)  # first maximum on ties
    cols = np.arange(H.shape[1])
    take = H[best, cols] > 0
    rho[best[take], cols[take]] = 1
    return rho


def prices(duals: DualState, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rate and power prices of every user for the partial-mode duals."""
    return duals.lam * weights + duals.alpha, duals.lam * duals.beta + duals.varsigma


# -- helpers ----------------------------------------------------------------

def feasibility_precheck(s: Scenario, use_local: bool = True, use_offload: bool = True) -> None:
    """Fail fast when some user's rate floor exceeds an optimistic capacity bound.

    The bound lets every user hold all N subchannels, each at the full
    transmit budget, and run the CPU at f_max.
    """
    sp = s.system
    for k, u in enumerate(s.users):
        bound = 0.0
        if use_offload:
            p_full = (u.max_power - sp.circuit_power) / sp.amplifier_coeff
            snr = p_full * s.gains[k] / sp.noise_power
            bound += sp.bandwidth_per_subchannel * float(np.sum(np.log(1.0 + snr) / LN2))
        if use_local:
            bound += u.max_cpu_freq / u.cycles_per_bit
        if u.min_bits_rate > bound:
            raise InfeasibleInstance(
                f"user {k}: rate floor {u.min_bits_rate:.6g} bit/s exceeds capacity bound {bound:.6g}")


def _curve(s: Scenario, k: int, rho_row: np.ndarray, use_local: bool) -> UserCurve:
    return UserCurve(s.system, s.users[k], s.gains[k][rho_row.astype(bool)], use_local)


@dataclass
class _Recovered:
    power: np.ndarray
    cpu_freq: np.ndarray
    alpha: np.ndarray
    varsigma: np.ndarray
    upsilon: np.ndarray
    feasible: np.ndarray


def recover_primal(s: Scenario, rho: np.ndarray, lam: np.ndarray, beta: np.ndarray,
                   use_local=True) -> _Recovered:
    """Exact per-user solution of the subtractive problem for a fixed assignment.

    The unconstrained level omega/beta is clipped into the interval allowed
    by the rate floor and power cap; the clipping fixes alpha or varsigma.
    Powers and frequencies are then produced by the closed forms from those
    multipliers so the returned duals and primal agree exactly. ``use_local``
    may be a per-user boolean array.
    """
    K, N = s.gains.shape
    local = np.broadcast_to(np.asarray(use_local, dtype=bool), (K,))
    w = s.user_array("weight")
    p = np.zeros((K, N))
    f = np.zeros(K)
    alpha = np.zeros(K)
    varsigma = np.zeros(K)
    upsilon = np.zeros(K)
    ok = np.ones(K, dtype=bool)
    for k in range(K):
        u = s.users[k]
        curve = _curve(s, k, rho[k], bool(local[k]))
        b = curve.bounds()
        a0, b0 = lam[k] * w[k], lam[k] * beta[k]
        t0 = a0 / b0 if b0 > 0 else math.inf
        if not b.feasible:
            ok[k] = False
            t = b.high
        else:
            t = min(max(t0, b.low), b.high)
        if math.isinf(t):
            # power cap never binds and beta == 0: run at saturation
            t = curve.saturation_level if math.isfinite(curve.saturation_level) else t0
        if t > t0:
            alpha[k] = b0 * t - a0
        elif 0 < t < t0:
            varsigma[k] = a0 / t - b0
        ra, pb = a0 + alpha[k], b0 + varsigma[k]
        if pb <= 0 or not math.isfinite(t):
            # beta == 0 and nothing binds: only possible without channels
            f[k] = u.max_cpu_freq if curve.use_local else 0.0
            continue
        mask = rho[k].astype(bool)
        if mask.any():
            p[k, mask] = optimal_power(ra, pb, s.system, s.gains[k, mask])
        if curve.use_local:
            f_free = math.sqrt(max(ra / u.cycles_per_bit, 0.0) / (3.0 * pb * u.chip_coeff))
            if f_free >= u.max_cpu_freq:
                f[k] = u.max_cpu_freq
                upsilon[k] = max(ra / u.cycles_per_bit - 3.0 * pb * u.chip_coeff * u.max_cpu_freq ** 2, 0.0)
            else:
                f[k] = f_free
    return _Recovered(p, f, alpha, varsigma, upsilon, ok)


def _channel_price(H: np.ndarray) -> np.ndarray:
    # subchannel price: runner-up indicator, so the winner has H > xi
    if H.shape[0] < 2:
        return np.zeros(H.shape[1])
    second = np.sort(H, axis=0)[-2]
    return np.maximum(second, 0.0)


def update_lambda_beta(s: Scenario, alloc: Allocation, lam, beta, damping: float = 0.7,
                       binary: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Damped fixed-point step towards lambda = 1/P and beta = omega R / P."""
    P = user_powers(s, alloc, binary)
    assert np.all(P > 0), "circuit power keeps P > 0"
    R = user_rates(s, alloc, binary)
    w = s.user_array("weight")
    th = damping
    return (1 - th) * np.asarray(lam) + th / P, (1 - th) * np.asarray(beta) + th * w * R / P


# -- inner loop -------------------------------------------------------------

@dataclass
class InnerResult:
    allocation: Allocation
    duals: DualState
    iterations: int
    converged: bool
    residual: float
    feasible_users: np.ndarray


def _initial_varsigma(s: Scenario, lam, beta, use_local: bool) -> np.ndarray:
    # with beta == 0 the power cap is the only thing bounding the level;
    # start from the cap level of the user holding every subchannel
    w = s.user_array("weight")
    out = np.zeros(s.num_users)
    for k in range(s.num_users):
        if beta[k] > 0:
            continue
        curve = UserCurve(s.system, s.users[k], s.gains[k], use_local)
        t = curve.level_for_power(s.users[k].max_power)
        if not math.isfinite(t):
            t = max(curve.saturation_level, 1e-300)
        out[k] = lam[k] * w[k] / t
    return out


def _exact_duals(s: Scenario, rho, lam, beta, rec: "_Recovered"):
    K, N = s.gains.shape
    w = s.user_array("weight")
    a = lam * w + rec.alpha
    b = lam * beta + rec.varsigma
    safe_b = np.where(b > 0, b, 1.0)
    z = np.where(b[:, None] > 0, optimal_power(a[:, None], safe_b[:, None], s.system, s.gains), 0.0)
    H = channel_indicator(a[:, None], s.system, z, s.gains)
    duals = DualState.initial(K, N, lam=lam, beta=beta, alpha=rec.alpha, varsigma=rec.varsigma,
                              upsilon=rec.upsilon, xi=_channel_price(H))
    return H, duals


def _settle(s: Scenario, rho, lam, beta, use_local: bool, eligible=None):
    """Exact recovery for ``rho``; returns (is_saddle, rank, rho, recovered, duals)."""
    rec = recover_primal(s, rho, lam, beta, use_local)
    alloc = Allocation(rho, rec.power, rec.cpu_freq)
    w = s.user_array("weight")
    value = float(np.sum(lam * (w * user_rates(s, alloc) - beta * user_powers(s, alloc))))
    H, duals = _exact_duals(s, rho, lam, beta, rec)
    if eligible is not None:
        H = np.where(np.asarray(eligible, dtype=bool)[:, None], H, -np.inf)
    saddle = bool(rec.feasible.all()) and np.array_equal(assign_subchannels(H), rho)
    return saddle, (int(rec.feasible.sum()), value), rho, rec, duals


def inner_dual_loop(s: Scenario, lam, beta, cfg: SolverConfig = SolverConfig(),
                    alpha0=None, varsigma0=None, use_local: bool = True,
                    eligible=None) -> InnerResult:
    """Dual subgradient loop for fixed (lambda, beta), then exact recovery.

    Each pass computes the closed-form powers and frequencies, assigns
    subchannels by the indicator argmax and takes a projected subgradient
    step on the rate and power multipliers with diminishing step
    ``step0 / (1 + i)**step_decay``. Steps are relative: a multiplier moves
    by a fraction of its current price times the normalised violation.
    Whenever a new assignment appears, its exact per-user multipliers are
    computed; if those reproduce the same assignment the pair is a saddle
    point and the loop stops. Otherwise the best assignment seen (by the
    subtractive objective after exact recovery) is returned, so C1-C5 hold
    whenever that assignment admits them. ``eligible`` masks users that may
    hold subchannels.
    """
    K, N = s.gains.shape
    lam = np.asarray(lam, dtype=float)
    beta = np.asarray(beta, dtype=float)
    w = s.user_array("weight")
    rth = s.user_array("min_bits_rate")
    pth = s.user_array("max_power")
    rscale = np.maximum(rth, s.system.bandwidth_per_subchannel)
    alpha = np.zeros(K) if alpha0 is None else np.array(alpha0, dtype=float)
    varsigma = _initial_varsigma(s, lam, beta, use_local) if varsigma0 is None else np.array(varsigma0, dtype=float)
    varsigma = np.where((lam * beta + varsigma) > 0, varsigma, _initial_varsigma(s, lam, np.zeros(K), use_local))

    visited: dict[bytes, tuple] = {}
    stale = 0
    residual = math.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_inner_iters + 1):
        a = lam * w + alpha
        b = lam * beta + varsigma
        z = optimal_power(a[:, None], b[:, None], s.system, s.gains)
        H = channel_indicator(a[:, None], s.system, z, s.gains)
        if eligible is not None:
            H = np.where(np.asarray(eligible, dtype=bool)[:, None], H, -np.inf)
        rho = assign_subchannels(H)

        key = rho.tobytes()
        if key in visited:
            stale += 1
            if stale >= _CYCLE_PATIENCE:
                break  # cycling among known assignments
        else:
            stale = 0
            visited[key] = _settle(s, rho, lam, beta, use_local, eligible)
            if visited[key][0]:
                # exact multipliers for this assignment reproduce it: saddle point
                converged = True
                residual = 0.0
                break

        if use_local:
            f = np.array([optimal_frequency(a[k], b[k], s.users[k]) for k in range(K)])
        else:
            f = np.zeros(K)
        trial = Allocation(rho, rho * z, f)
        R = user_rates(s, trial)
        P = user_powers(s, trial)
        g_rate = (rth - R) / rscale  # > 0 means the floor is violated
        g_pow = (P - pth) / pth  # > 0 means the cap is violated
        res_a = np.maximum(np.maximum(g_rate, 0.0), alpha / a * np.abs(g_rate))
        res_s = np.maximum(np.maximum(g_pow, 0.0), varsigma / b * np.abs(g_pow))
        residual = float(max(res_a.max(), res_s.max()))
        if residual < cfg.inner_tol:
            converged = True
            break
        step = cfg.step0 / it ** cfg.step_decay
        alpha = np.maximum(alpha + step * a * np.clip(g_rate, -1.0, 1.0), 0.0)
        varsigma = np.maximum(varsigma + step * b * np.clip(g_pow, -1.0, 1.0), 0.0)
        # keep the power price positive so the closed forms stay defined
        varsigma = np.where(lam * beta + varsigma > 0, varsigma, b * 1e-3)

    if converged and residual == 0.0:
        _, _, rho, rec, duals = visited[key]
    else:
        # no saddle point (relaxation gap): polish the best primal seen by
        # exact local search on the subtractive objective
        _, _, rho, _, _ = max(visited.values(), key=lambda v: v[1])
        scorer = _SubtractiveScorer(s, lam, beta, use_local, eligible)
        rho = _rho_from_owner(local_search(_owner(rho), K, scorer.score), K)
        _, _, rho, rec, duals = _settle(s, rho, lam, beta, use_local, eligible)
    alloc = Allocation(rho, rec.power, rec.cpu_freq)
    return InnerResult(alloc, duals, it, converged, residual, rec.feasible)


# -- assignment refinement ---------------------------------------------------

class _AssignmentScorer:
    """Exact weighted-sum CE of a fixed assignment (per-user Dinkelbach), memoised per channel set."""

    def __init__(self, s: Scenario, use_local: bool):
        self.s = s
        self.use_local = use_local
        self._cache: dict[tuple, tuple[bool, float]] = {}

    def user(self, k: int, chans: tuple) -> tuple[bool, float]:
        key = (k, chans)
        if key not in self._cache:
            u = self.s.users[k]
            curve = UserCurve(self.s.system, u, self.s.gains[k, list(chans)], self.use_local)
            b = curve.bounds()
            if not b.feasible:
                self._cache[key] = (False, 0.0)
            else:
                t = curve.best_ratio_level(u.weight, bounds=b)
                self._cache[key] = (True, u.weight * curve.rate(t) / curve.power(t))
        return self._cache[key]

    def score(self, owner: tuple) -> tuple[int, float]:
        ok, total = 0, 0.0
        for k in range(self.s.num_users):
            feas, ce = self.user(k, tuple(n for n, o in enumerate(owner) if o == k))
            ok += feas
            total += ce
        return ok, total


class _SubtractiveScorer:
    """Exact value of sum_k lam_k (omega_k R_k - beta_k P_k) for a fixed assignment.

    Mirrors :func:`recover_primal` user by user, memoised per channel set.
    Assignments giving channels to ineligible users score below everything.
    """

    def __init__(self, s: Scenario, lam, beta, use_local=True, eligible=None):
        K = s.num_users
        self.s = s
        self.lam = lam
        self.beta = beta
        self.local = np.broadcast_to(np.asarray(use_local, dtype=bool), (K,))
        self.eligible = np.ones(K, dtype=bool) if eligible is None else np.asarray(eligible, dtype=bool)
        self._cache: dict[tuple, tuple[bool, float]] = {}

    def user(self, k: int, chans: tuple) -> tuple[bool, float]:
        key = (k, chans)
        if key not in self._cache:
            u = self.s.users[k]
            curve = UserCurve(self.s.system, u, self.s.gains[k, list(chans)], bool(self.local[k]))
            b = curve.bounds()
            t0 = u.weight / self.beta[k] if self.beta[k] > 0 else math.inf
            t = min(max(t0, b.low), b.high) if b.feasible else b.high
            if math.isinf(t):
                t = curve.saturation_level
            if math.isinf(t):
                # beta == 0 with the cap never binding cannot happen once a channel is held
                val = math.inf
            else:
                val = self.lam[k] * (u.weight * curve.rate(t) - self.beta[k] * curve.power(t))
            self._cache[key] = (b.feasible, val)
        return self._cache[key]

    def score(self, owner: tuple) -> tuple[int, float]:
        ok, total = 0, 0.0
        for k in range(self.s.num_users):
            chans = tuple(n for n, o in enumerate(owner) if o == k)
            if chans and not self.eligible[k]:
                return -1, -math.inf
            feas, v = self.user(k, chans)
            ok += feas
            total += v
        return ok, total


def neighbours(owner: tuple, num_users: int):
    """Assignments one move away: relocate (or release) one subchannel, or swap two owners."""
    N = len(owner)
    for n in range(N):
        for k in range(-1, num_users):
            if k != owner[n]:
                yield owner[:n] + (k,) + owner[n + 1:]
    for n in range(N):
        for m in range(n + 1, N):
            if owner[n] != owner[m]:
                o = list(owner)
                o[n], o[m] = o[m], o[n]
                yield tuple(o)


def local_search(owner: tuple, num_users: int, score, better=None) -> tuple:
    """Best-improvement ascent of ``score(owner)`` over :func:`neighbours`."""
    better = better or _better
    best = score(owner)
    while True:
        top = None
        for c in neighbours(owner, num_users):
            sc = score(c)
            if better(sc, best):
                top, best = c, sc
        if top is None:
            return owner
        owner = top


def _rho_from_owner(owner: tuple, K: int) -> np.ndarray:
    rho = np.zeros((K, len(owner)), dtype=np.int8)
    for n, k in enumerate(owner):
        if k >= 0:
            rho[k, n] = 1
    return rho


def refine_assignment(s: Scenario, rho: np.ndarray, use_local: bool = True) -> np.ndarray:
    """Best-improvement local search over subchannel assignments.

    Every candidate is scored exactly, since for a fixed assignment the
    users decouple into single-ratio problems.
    """
    K = rho.shape[0]
    scorer = _AssignmentScorer(s, use_local)
    return _rho_from_owner(local_search(_owner(rho), K, scorer.score), K)


def fixed_assignment_solution(s: Scenario, rho: np.ndarray, use_local: bool = True):
    """Exact optimum for a fixed assignment together with its parametric duals.

    Returns (allocation, duals, recovered) with lambda = 1/P and
    beta = omega R / P at the optimum, i.e. a fixed point of the
    (lambda, beta) update.
    """
    K, N = rho.shape
    local = np.broadcast_to(np.asarray(use_local, dtype=bool), (K,))
    lam = np.zeros(K)
    beta = np.zeros(K)
    for k in range(K):
        u = s.users[k]
        curve = _curve(s, k, rho[k], bool(local[k]))
        t = curve.best_ratio_level(u.weight)
        P = curve.power(t)
        lam[k] = 1.0 / P
        beta[k] = u.weight * curve.rate(t) / P
    rec = recover_primal(s, rho, lam, beta, local)
    alloc = Allocation(rho, rec.power, rec.cpu_freq)
    # one more fixed-point pass so lambda/beta match the recovered primal to rounding
    lam = 1.0 / user_powers(s, alloc)
    beta = s.user_array("weight") * user_rates(s, alloc) * lam
    rec = recover_primal(s, rho, lam, beta, local)
    alloc = Allocation(rho, rec.power, rec.cpu_freq)
    _, duals = _exact_duals(s, rho, lam, beta, rec)
    return alloc, duals, rec


# -- outer loop -------------------------------------------------------------

def _primal_change(a: Allocation, b: Allocation, s: Scenario) -> float:
    if not np.array_equal(a.assignment, b.assignment):
        return math.inf
    pth = s.user_array("max_power")[:, None]
    dp = np.max(np.abs(a.power - b.power) / pth) if a.power.size else 0.0
    fscale = np.maximum(s.user_array("max_cpu_freq"), 1.0)
    df = np.max(np.abs(a.cpu_freq - b.cpu_freq) / fscale)
    return float(max(dp, df))


def _violation(report: CeReport, s: Scenario, binary: bool = False) -> float:
    rth = s.user_array("min_bits_rate")
    pth = s.user_array("max_power")
    v_r = np.maximum(rth - report.per_user_rate, 0.0) / np.maximum(rth, 1.0)
    v_p = np.maximum(report.per_user_power - pth, 0.0) / pth
    return float(max(v_r.max(), v_p.max()))


def _owner(rho: np.ndarray) -> tuple:
    return tuple(int(np.argmax(rho[:, n])) if rho[:, n].any() else -1 for n in range(rho.shape[1]))


def _better(a: tuple[int, float], b: tuple[int, float]) -> bool:
    return a[0] > b[0] or (a[0] == b[0] and a[1] > b[1] + 1e-12 * abs(b[1]))


def parametric_loop(s: Scenario, cfg: SolverConfig, use_local: bool = True,
                    scheme: str = "proposed-partial", refine: bool = True) -> PartialSolution:
    """Outer (lambda, beta) iteration shared by the proposed solver and its variants.

    The inner loop proposes an assignment for the current (lambda, beta). A
    proposal that differs from the incumbent is accepted only when its exact
    fixed-assignment CE is higher; otherwise the incumbent assignment is kept
    and (lambda, beta) keep iterating on it. This stops the 2-cycles that
    integer assignments otherwise produce when the relaxed optimum is
    fractional.
    """
    K, N = s.gains.shape
    pc = s.system.circuit_power
    lam = np.full(K, 1.0 / pc)
    beta = np.zeros(K)
    alpha = varsigma = None
    scorer = _AssignmentScorer(s, use_local)
    incumbent: Optional[tuple] = None
    trace = SolveTrace()
    prev: Optional[Allocation] = None
    converged = False
    total_inner = 0
    outer = 0
    for outer in range(1, cfg.max_outer_iters + 1):
        inner = inner_dual_loop(s, lam, beta, cfg, alpha, varsigma, use_local)
        total_inner += inner.iterations
        alloc, duals = inner.allocation, inner.duals
        proposal = _owner(alloc.assignment)
        if incumbent is None or proposal == incumbent or _better(scorer.score(proposal), scorer.score(incumbent)):
            incumbent = proposal
        else:
            rho = _rho_from_owner(incumbent, K)
            rec = recover_primal(s, rho, lam, beta, use_local)
            alloc = Allocation(rho, rec.power, rec.cpu_freq)
            _, duals = _exact_duals(s, rho, lam, beta, rec)

        report = ce_report(s, alloc)
        r1, r2 = lemma1_residuals(s, alloc, lam, beta)
        lemma = max(r1, r2)
        trace.append(IterationRecord(outer, inner.iterations, report.weighted_sum_ce,
                                     duals, lemma, _violation(report, s)))
        change = math.inf if prev is None else _primal_change(alloc, prev, s)
        log.debug("outer %d: ce=%.6g lemma=%.2e change=%.2e inner=%d",
                  outer, report.weighted_sum_ce, lemma, change, inner.iterations)
        if lemma < cfg.outer_tol and change < cfg.outer_tol:
            converged = True
            break
        prev = alloc
        alpha, varsigma = duals.alpha, duals.varsigma
        lam, beta = update_lambda_beta(s, alloc, lam, beta, cfg.damping)

    if refine:
        rho = refine_assignment(s, alloc.assignment, use_local)
        if not np.array_equal(rho, alloc.assignment):
            alloc, duals, _ = fixed_assignment_solution(s, rho, use_local)
            report = ce_report(s, alloc)
            r1, r2 = lemma1_residuals(s, alloc, duals.lam, duals.beta)
            trace.append(IterationRecord(outer + 1, 0, report.weighted_sum_ce, duals,
                                         max(r1, r2), _violation(report, s)))
            log.debug("refined assignment: ce=%.6g", report.weighted_sum_ce)
    return PartialSolution(alloc, report, duals, trace, converged and report.all_feasible,
                           outer, total_inner, scheme)


def solve_partial(s: Scenario, cfg: SolverConfig = SolverConfig()) -> PartialSolution:
    """Maximise the weighted sum of computation efficiencies, partial offloading.

    Raises
    ------
    InfeasibleInstance
        If a rate floor exceeds the optimistic capacity bound.
    """
    validate_scenario(s)
    feasibility_precheck(s)
    return parametric_loop(s, cfg, use_local=True, scheme="proposed-partial")

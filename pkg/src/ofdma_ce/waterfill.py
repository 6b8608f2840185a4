"""Single-user allocation along the water-level curve.

For a fixed subchannel set, the maximiser of ``a*R - b*P`` (``a`` the rate
price, ``b`` the power price) depends only on the level ``t = a / b``:

    p_n(t) = [t * B / (ln2 * zeta) - N0 / h_n]^+
    f(t)   = min(f_max, sqrt(t / (3 * C * eps)))

Both R(t) and P(t) are non-decreasing in t, so rate floors and power caps
turn into an interval of admissible levels. This is what makes exact
per-user primal recovery cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SystemParams, UserParams
from .objective import LN2

__all__ = ["UserCurve", "LevelBounds"]

# Bisection targets sit this far inside the constraint so that re-evaluating
# the allocation never lands on the wrong side by rounding.
_MARGIN = 1e-13


@dataclass(frozen=True)
class LevelBounds:
    low: float  # smallest level meeting the rate floor
    high: float  # largest level within the power cap
    feasible: bool


class UserCurve:
    """Water-level parametrisation of one user's allocation on a channel set.

    Parameters
    ----------
    gains : array_like
        Channel power gains of the subchannels held by the user (may be empty).
    use_local : bool
        If False the CPU frequency is pinned to zero (offload-only users).
    """

    def __init__(self, sys: SystemParams, user: UserParams, gains, use_local: bool = True):
        self.sys = sys
        self.user = user
        self.gains = np.asarray(gains, dtype=float).ravel()
        self.use_local = bool(use_local) and user.max_cpu_freq > 0
        self._pscale = sys.bandwidth_per_subchannel / (LN2 * sys.amplifier_coeff)
        self._inv_snr = sys.noise_power / self.gains
        self._fscale = 3.0 * user.cycles_per_bit * user.chip_coeff

    # -- primal as a function of the level ----------------------------------

    def powers(self, t: float) -> np.ndarray:
        if math.isinf(t):
            return np.full_like(self.gains, np.inf)
        return np.maximum(t * self._pscale - self._inv_snr, 0.0)

    def frequency(self, t: float) -> float:
        if not self.use_local:
            return 0.0
        if math.isinf(t):
            return self.user.max_cpu_freq
        return min(self.user.max_cpu_freq, math.sqrt(t / self._fscale))

    def rate(self, t: float) -> float:
        p = self.powers(t)
        snr = p * self.gains / self.sys.noise_power
        off = self.sys.bandwidth_per_subchannel * float(np.sum(np.log(1.0 + snr) / LN2))
        return off + self.frequency(t) / self.user.cycles_per_bit

    def power(self, t: float) -> float:
        f = self.frequency(t)
        return (self.sys.amplifier_coeff * float(np.sum(self.powers(t)))
                + self.user.chip_coeff * f ** 3 + self.sys.circuit_power)

    @property
    def saturation_level(self) -> float:
        """Level past which nothing changes (finite only without channels)."""
        if self.gains.size:
            return math.inf
        if not self.use_local:
            return 0.0
        return self._fscale * self.user.max_cpu_freq ** 2

    def max_rate(self) -> float:
        """Supremum of R over all levels (inf whenever a channel is held)."""
        if self.gains.size:
            return math.inf
        return self.frequency(math.inf) / self.user.cycles_per_bit

    # -- constraint levels ---------------------------------------------------

    def _bisect(self, pred, lo: float, hi: float) -> tuple[float, float]:
        # pred(lo) False, pred(hi) True, pred monotone; shrink to adjacent floats
        for _ in range(2000):
            mid = math.sqrt(lo * hi) if lo > 0 else hi * 0.5
            if not lo < mid < hi:
                mid = 0.5 * (lo + hi)
                if not lo < mid < hi:
                    break
            if pred(mid):
                hi = mid
            else:
                lo = mid
        return lo, hi

    def _first_level(self) -> float:
        # level where the strongest channel (or the CPU) starts to be used
        cands = []
        if self.gains.size:
            cands.append(float(np.min(self._inv_snr)) / self._pscale)
        if self.use_local:
            cands.append(self._fscale * 1.0)
        return max(min(cands), 1e-300) if cands else 1.0

    def level_for_rate(self, target: float) -> float:
        """Smallest level with R >= target; inf if unreachable."""
        if target <= 0:
            return 0.0
        goal = target * (1.0 + _MARGIN)
        if goal > self.max_rate():
            if target <= self.max_rate():
                return self.saturation_level
            return math.inf
        hi = self._first_level()
        while self.rate(hi) < goal:
            hi *= 4.0
        _, hi = self._bisect(lambda t: self.rate(t) >= goal, 0.0, hi)
        return hi

    def level_for_power(self, cap: float) -> float:
        """Largest level with P <= cap; inf if the cap never binds."""
        goal = cap * (1.0 - _MARGIN)
        if self.power(self.saturation_level) <= cap and math.isfinite(self.saturation_level):
            return math.inf
        if self.sys.circuit_power > goal:
            return -math.inf
        hi = self._first_level()
        while self.power(hi) <= goal:
            hi *= 4.0
        lo, _ = self._bisect(lambda t: self.power(t) > goal, 0.0, hi)
        return lo

    def bounds(self) -> LevelBounds:
        low = self.level_for_rate(self.user.min_bits_rate)
        high = self.level_for_power(self.user.max_power)
        # low = inf means the floor is unreachable even when the cap never binds
        return LevelBounds(low, high, math.isfinite(low) and low <= high)

    def best_ratio_level(self, weight: float = 1.0, tol: float = 1e-13,
                         bounds: LevelBounds | None = None) -> float:
        """Level maximising weight*R/P within the admissible interval (Dinkelbach).

        Infeasible users get the power-cap level.
        """
        b = bounds or self.bounds()
        if not b.feasible:
            return b.high
        eta = 0.0
        t = b.high if math.isfinite(b.high) else max(b.low, self.saturation_level)
        for _ in range(200):
            t_new = math.inf if eta == 0 else weight / eta
            t_new = min(max(t_new, b.low), b.high)
            if math.isinf(t_new):
                t_new = max(b.low, self.saturation_level)
            t = t_new
            eta_new = weight * self.rate(t) / self.power(t)
            if abs(eta_new - eta) <= tol * eta_new:
                break
            eta = eta_new
        return t

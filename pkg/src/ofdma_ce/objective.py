"""Rates, powers, computation efficiency and feasibility of an allocation.

Every solver, baseline and oracle evaluates allocations through this module
only, so a CE number means the same thing everywhere.
"""

from __future__ import annotations

import math

import numpy as np

from .model import Allocation, CeReport, NonBinaryMode, Scenario

__all__ = [
    "LN2",
    "FEAS_TOL",
    "offload_rates",
    "local_rates",
    "offload_powers",
    "local_powers",
    "user_rates",
    "user_powers",
    "user_rate_partial",
    "user_power_partial",
    "user_rate_binary",
    "user_power_binary",
    "ce_report",
    "lemma1_residuals",
]

LN2 = math.log(2.0)
# Constraint g <= 0 is satisfied iff g <= FEAS_TOL in the constraint's own units.
FEAS_TOL = 1e-9


def _log2_1p(x):
    return np.log(1.0 + x) / LN2


def offload_rates(s: Scenario, a: Allocation) -> np.ndarray:
    """Per-user sum over assigned subchannels of B log2(1 + p h / N0)."""
    sp = s.system
    snr = a.power * s.gains / sp.noise_power
    return sp.bandwidth_per_subchannel * np.sum(a.assignment * _log2_1p(snr), axis=1)


def local_rates(s: Scenario, a: Allocation) -> np.ndarray:
    return a.cpu_freq / s.user_array("cycles_per_bit")


def offload_powers(s: Scenario, a: Allocation) -> np.ndarray:
    return s.system.amplifier_coeff * np.sum(a.assignment * a.power, axis=1)


def local_powers(s: Scenario, a: Allocation) -> np.ndarray:
    return s.user_array("chip_coeff") * a.cpu_freq ** 3


def _binary_mask(a: Allocation) -> np.ndarray:
    if a.mode is None:
        raise NonBinaryMode("allocation carries no mode flags")
    mu = np.asarray(a.mode)
    if not np.all((mu == 0) | (mu == 1)):
        raise NonBinaryMode(f"mode flags must be 0 or 1, got {mu.tolist()}")
    return mu.astype(float)


def user_rates(s: Scenario, a: Allocation, binary: bool = False) -> np.ndarray:
    """Computed bits per second R_k for every user."""
    if binary:
        mu = _binary_mask(a)
        return mu * offload_rates(s, a) + (1.0 - mu) * local_rates(s, a)
    return offload_rates(s, a) + local_rates(s, a)


def user_powers(s: Scenario, a: Allocation, binary: bool = False) -> np.ndarray:
    """Consumed power P_k for every user; circuit power is charged unconditionally."""
    pc = s.system.circuit_power
    if binary:
        mu = _binary_mask(a)
        return mu * offload_powers(s, a) + (1.0 - mu) * local_powers(s, a) + pc
    return offload_powers(s, a) + local_powers(s, a) + pc


def _check_index(s: Scenario, k: int) -> int:
    if not 0 <= k < s.num_users:
        raise IndexError(f"user index {k} out of range for K={s.num_users}")
    return k


def user_rate_partial(s: Scenario, a: Allocation, k: int) -> float:
    return float(user_rates(s, a)[_check_index(s, k)])


def user_power_partial(s: Scenario, a: Allocation, k: int) -> float:
    return float(user_powers(s, a)[_check_index(s, k)])


def user_rate_binary(s: Scenario, a: Allocation, k: int) -> float:
    return float(user_rates(s, a, binary=True)[_check_index(s, k)])


def user_power_binary(s: Scenario, a: Allocation, k: int) -> float:
    return float(user_powers(s, a, binary=True)[_check_index(s, k)])


def ce_report(s: Scenario, a: Allocation, mode: str = "partial") -> CeReport:
    """Evaluate rates, powers, CE and the feasibility of every constraint group.

    Infeasibility is reported in ``feasible`` rather than raised. Keys are
    ``C1``..``C5`` in partial mode; binary mode reports the rate and power
    constraints as ``13b``/``13c`` and the mode integrality as ``13e``.
    """
    if mode not in ("partial", "binary"):
        raise ValueError(f"mode must be 'partial' or 'binary', got {mode!r}")
    binary = mode == "binary"
    rate = user_rates(s, a, binary)
    power = user_powers(s, a, binary)
    with np.errstate(divide="ignore", invalid="ignore"):
        ce = np.where(power > 0, rate / power, 0.0)
    w = s.user_array("weight")

    rth = s.user_array("min_bits_rate")
    pth = s.user_array("max_power")
    fmax = s.user_array("max_cpu_freq")
    rho = a.assignment
    feasible = {
        "C1": bool(np.all(rth - rate <= FEAS_TOL)),
        "C2": bool(np.all(power - pth <= FEAS_TOL)),
        "C3": bool(np.all(a.cpu_freq >= -FEAS_TOL) and np.all(a.cpu_freq - fmax <= FEAS_TOL)),
        "C4": bool(np.all(rho.sum(axis=0) <= 1)),
        "C5": bool(np.all((rho == 0) | (rho == 1))
                   and not np.any((a.power > 0) & (rho == 0))
                   and np.all(a.power >= 0)),
    }
    if binary:
        feasible["13b"] = feasible.pop("C1")
        feasible["13c"] = feasible.pop("C2")
        feasible["13e"] = True  # _binary_mask already rejected non-binary flags
    return CeReport(rate, power, ce, float(np.sum(w * ce)), feasible)


def lemma1_residuals(s: Scenario, alloc: Allocation, lam, beta, binary: bool = False) -> tuple[float, float]:
    """(max_k |omega R - beta P| / (omega R), max_k |lambda P - 1|)."""
    w = s.user_array("weight")
    R = user_rates(s, alloc, binary)
    P = user_powers(s, alloc, binary)
    wr = w * R
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(wr > 0, np.abs(wr - beta * P) / wr, np.abs(beta * P))
    return float(np.max(rel)), float(np.max(np.abs(lam * P - 1.0)))

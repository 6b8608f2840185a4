"""Domain types for the OFDMA mobile-edge-computing efficiency model.

All quantities are SI: watts, hertz, seconds, bits and CPU cycles. Unit
conversion (MHz, mW, ...) is the job of the config parser, never of the
solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "SystemParams",
    "UserParams",
    "Scenario",
    "Allocation",
    "DualState",
    "CeReport",
    "IterationRecord",
    "SolveTrace",
    "Issue",
    "ScenarioError",
    "InfeasibleInstance",
    "DegenerateDual",
    "NonBinaryMode",
    "ZeroDimension",
    "InstanceTooLarge",
    "validate_scenario",
]


def _frozen_array(x, dtype=float) -> np.ndarray:
    a = np.array(x, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


# -- errors -----------------------------------------------------------------

@dataclass(frozen=True)
class Issue:
    """One violated invariant found by :func:`validate_scenario`."""

    kind: str  # NonPositiveParameter | GainMatrixShapeMismatch | EmptyUserSet
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind} at {self.where}: {self.message}"


class ScenarioError(ValueError):
    """Raised with the complete list of invariant violations of a scenario."""

    def __init__(self, issues: Sequence[Issue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    @property
    def kinds(self) -> list[str]:
        return [i.kind for i in self.issues]


class InfeasibleInstance(RuntimeError):
    """The rate requirement cannot be met within the power/frequency limits."""


class DegenerateDual(ValueError):
    """Power price lambda*beta + varsigma is zero, closed forms are undefined."""


class NonBinaryMode(ValueError):
    pass


class ZeroDimension(ValueError):
    pass


class InstanceTooLarge(ValueError):
    pass


# -- parameters -------------------------------------------------------------

@dataclass(frozen=True)
class SystemParams:
    bandwidth_per_subchannel: float = 2e6  # B, Hz
    block_duration: float = 1.0  # T, s
    num_subchannels: int = 4  # N
    noise_power: float = 1e-9  # N0, W per subchannel
    amplifier_coeff: float = 3.0  # zeta
    circuit_power: float = 0.05  # p_c, W


@dataclass(frozen=True)
class UserParams:
    weight: float = 1.0  # omega_k
    cycles_per_bit: float = 1e3  # C_k
    chip_coeff: float = 1e-24  # epsilon_k, J s^2 / cycle^3
    max_cpu_freq: float = 1e8  # f_k^max, cycles/s
    min_bits_rate: float = 5e4  # R_k^th, bits/s
    max_power: float = 1.0  # P_k^th, W


@dataclass(frozen=True)
class Scenario:
    system: SystemParams
    users: tuple[UserParams, ...]
    gains: np.ndarray  # K x N channel power gains h_{k,n}
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "gains", _frozen_array(self.gains))

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_subchannels(self) -> int:
        return self.system.num_subchannels

    def user_array(self, name: str) -> np.ndarray:
        """Per-user field as a length-K float array, e.g. ``user_array("weight")``."""
        return np.array([getattr(u, name) for u in self.users], dtype=float)

    def with_users(self, **changes) -> "Scenario":
        """Copy with the given UserParams fields overridden for every user."""
        return replace(self, users=tuple(replace(u, **changes) for u in self.users))


def validate_scenario(s: Scenario) -> Scenario:
    """Check every invariant of ``s`` and return it unchanged.

    Raises
    ------
    ScenarioError
        Carrying one :class:`Issue` per violated invariant, not just the first.
    """
    issues: list[Issue] = []

    def positive(where, value, strict=True):
        bad = not np.isfinite(value) or (value <= 0 if strict else value < 0)
        if bad:
            rel = ">" if strict else ">="
            issues.append(Issue("NonPositiveParameter", where, f"{value!r} must be {rel} 0"))

    sp = s.system
    for f in fields(SystemParams):
        positive(f"system.{f.name}", getattr(sp, f.name))
    if int(sp.num_subchannels) != sp.num_subchannels:
        issues.append(Issue("NonPositiveParameter", "system.num_subchannels", "must be an integer"))

    if len(s.users) == 0:
        issues.append(Issue("EmptyUserSet", "users", "at least one user is required"))
    for k, u in enumerate(s.users):
        positive(f"users[{k}].weight", u.weight)
        positive(f"users[{k}].chip_coeff", u.chip_coeff)
        positive(f"users[{k}].max_cpu_freq", u.max_cpu_freq, strict=False)
        positive(f"users[{k}].min_bits_rate", u.min_bits_rate, strict=False)
        if not u.cycles_per_bit >= 1:
            issues.append(Issue("NonPositiveParameter", f"users[{k}].cycles_per_bit",
                                f"{u.cycles_per_bit!r} must be >= 1"))
        if not u.max_power > sp.circuit_power:
            issues.append(Issue("NonPositiveParameter", f"users[{k}].max_power",
                                f"{u.max_power!r} must exceed circuit power {sp.circuit_power!r}"))

    g = s.gains
    if g.ndim != 2 or g.shape != (len(s.users), sp.num_subchannels):
        issues.append(Issue("GainMatrixShapeMismatch", "gains",
                            f"shape {g.shape} != ({len(s.users)}, {sp.num_subchannels})"))
    elif g.size and not (np.all(np.isfinite(g)) and np.all(g > 0)):
        issues.append(Issue("NonPositiveParameter", "gains", "all channel gains must be > 0"))

    if issues:
        raise ScenarioError(issues)
    return s


# -- allocation and solver state --------------------------------------------

@dataclass(frozen=True)
class Allocation:
    """Subchannel assignment rho, powers p, CPU frequencies f and modes mu.

    ``mode`` is ``None`` in partial offloading; in binary offloading it holds
    1 for offloading users and 0 for local ones.
    """

    assignment: np.ndarray  # K x N of {0, 1}
    power: np.ndarray  # K x N, W
    cpu_freq: np.ndarray  # K, cycles/s
    mode: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "assignment", _frozen_array(self.assignment, dtype=np.int8))
        object.__setattr__(self, "power", _frozen_array(self.power))
        object.__setattr__(self, "cpu_freq", _frozen_array(self.cpu_freq))
        if self.mode is not None:
            mu = np.asarray(self.mode, dtype=float)
            # keep non-integral flags as floats so evaluation can reject them
            binary = np.all((mu == 0) | (mu == 1))
            object.__setattr__(self, "mode", _frozen_array(mu, dtype=np.int8 if binary else float))

    @classmethod
    def zeros(cls, num_users: int, num_subchannels: int, binary: bool = False) -> "Allocation":
        mode = np.zeros(num_users) if binary else None
        return cls(np.zeros((num_users, num_subchannels)),
                   np.zeros((num_users, num_subchannels)),
                   np.zeros(num_users), mode)

    def check(self, s: Scenario, atol: float = 1e-9) -> list[str]:
        """Return the violated structural invariants (empty when valid)."""
        out = []
        if np.any(self.assignment.sum(axis=0) > 1):
            out.append("subchannel assigned to more than one user")
        if np.any((self.power > 0) & (self.assignment == 0)):
            out.append("power on an unassigned subchannel")
        if np.any(self.power < 0):
            out.append("negative power")
        fmax = s.user_array("max_cpu_freq")
        if np.any(self.cpu_freq < -atol) or np.any(self.cpu_freq > fmax * (1 + atol)):
            out.append("cpu frequency outside [0, f_max]")
        return out


def _vec(x, k):
    return _frozen_array(np.zeros(k) if x is None else x)


@dataclass(frozen=True)
class DualState:
    """Parametric pair and Lagrange multipliers.

    ``lam``/``beta`` drive the partial-mode parametric loop, ``psi``/``phi``
    are their binary-mode counterparts. ``upsilon``, ``alpha``, ``varsigma``
    price the f_max, rate and power constraints; ``vartheta``/``chi`` are the
    binary-mode rate and power prices. ``xi`` is the per-subchannel price.
    """

    lam: np.ndarray
    beta: np.ndarray
    upsilon: np.ndarray
    alpha: np.ndarray
    varsigma: np.ndarray
    xi: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    vartheta: np.ndarray
    chi: np.ndarray

    @classmethod
    def initial(cls, num_users: int, num_subchannels: int, **values) -> "DualState":
        names = [f.name for f in fields(cls)]
        unknown = set(values) - set(names)
        if unknown:
            raise TypeError(f"unknown multipliers {sorted(unknown)}")
        kw = {n: _vec(values.get(n), num_subchannels if n == "xi" else num_users) for n in names}
        return cls(**kw)

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _frozen_array(getattr(self, f.name)))

    def update(self, **changes) -> "DualState":
        return replace(self, **changes)

    def is_nonnegative(self) -> bool:
        return all(np.all(getattr(self, f.name) >= 0) for f in fields(self))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name).tolist() for f in fields(self)}


@dataclass(frozen=True)
class CeReport:
    per_user_rate: np.ndarray  # bits/s
    per_user_power: np.ndarray  # W
    per_user_ce: np.ndarray  # bits/J
    weighted_sum_ce: float
    feasible: dict  # constraint group -> bool

    @property
    def all_feasible(self) -> bool:
        return all(self.feasible.values())

    def as_dict(self) -> dict:
        return {
            "per_user_rate": self.per_user_rate.tolist(),
            "per_user_power": self.per_user_power.tolist(),
            "per_user_ce": self.per_user_ce.tolist(),
            "weighted_sum_ce": float(self.weighted_sum_ce),
            "feasible": dict(self.feasible),
        }


@dataclass(frozen=True)
class IterationRecord:
    outer_iter: int
    inner_iter: int
    weighted_sum_ce: float
    duals: DualState
    lemma1_residual: float
    constraint_violations: float

    def as_dict(self) -> dict:
        return {
            "outer_iter": self.outer_iter,
            "inner_iter": self.inner_iter,
            "weighted_sum_ce": self.weighted_sum_ce,
            "lemma1_residual": self.lemma1_residual,
            "constraint_violations": self.constraint_violations,
            "duals": self.duals.as_dict(),
        }


@dataclass
class SolveTrace:
    """Append-only iteration log; (outer, inner) indices strictly increase."""

    records: list[IterationRecord] = field(default_factory=list)

    def append(self, rec: IterationRecord) -> None:
        if self.records:
            last = self.records[-1]
            if (rec.outer_iter, rec.inner_iter) <= (last.outer_iter, last.inner_iter):
                raise ValueError("trace indices must strictly increase")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def objective_history(self) -> np.ndarray:
        return np.array([r.weighted_sum_ce for r in self.records])

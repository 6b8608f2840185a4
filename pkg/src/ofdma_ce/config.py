"""Scenario files: parsing, SI-suffixed quantities and round-trip serialisation.

A scenario document is YAML (JSON is accepted too, being a subset)::

    seed: 7
    system:
      bandwidth_per_subchannel: 2MHz
      num_subchannels: 4
      noise_power: 1e-9 W
      amplifier_coeff: 3
      circuit_power: 50mW
    users:
      count: 2                # or a list of per-user tables
      defaults: {min_bits_rate: 50 kbit/s, max_power: 1 W}
    channel:
      mean_gain: 1e-4         # or `gains: [[...], [...]]`
    solver:
      outer_tol: 1e-4

Every section is optional; missing values take the library defaults.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .channel import ChannelConfig, sample_gains
from .model import Scenario, SystemParams, UserParams, validate_scenario
from .solver_partial import SolverConfig

__all__ = ["ConfigParseError", "RunConfig", "parse_quantity", "load_config", "loads_config",
           "scenario_document", "dump_scenario"]


class ConfigParseError(ValueError):
    """A scenario file could not be turned into a valid configuration.

    ``line`` is 1-based when known; ``field`` is a dotted path such as
    ``users[1].max_power``.
    """

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None,
                 source: str = "<config>"):
        self.message = message
        self.line = line
        self.field = field
        self.source = source
        where = source + (f":{line}" if line else "")
        if field:
            where += f" [{field}]"
        super().__init__(f"{where}: {message}")


_PREFIX = {"p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3, "": 1.0,
           "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12}

# accepted unit spellings per physical quantity
_UNITS = {
    "Hz": ("Hz", "cycles/s"),
    "W": ("W",),
    "bit/s": ("bit/s", "bps", "b/s"),
    "s": ("s",),
}

_SYSTEM_UNITS = {
    "bandwidth_per_subchannel": "Hz",
    "block_duration": "s",
    "noise_power": "W",
    "circuit_power": "W",
}
_USER_UNITS = {
    "max_cpu_freq": "Hz",
    "min_bits_rate": "bit/s",
    "max_power": "W",
}

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


def parse_quantity(value: Any, unit: Optional[str] = None, field: Optional[str] = None) -> float:
    """Turn ``2MHz``, ``50 mW``, ``1e-9`` or a plain number into a float in SI base units.

    ``unit`` names the expected quantity (``"Hz"``, ``"W"``, ``"bit/s"``,
    ``"s"``); a suffix of a different quantity is rejected. Dimensionless
    fields (``unit=None``) accept only a bare number.

    >>> parse_quantity("2MHz", "Hz")
    2000000.0
    >>> parse_quantity("50mW", "W")
    0.05
    """
    if isinstance(value, bool):
        raise ConfigParseError(f"expected a number, got {value!r}", field=field)
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigParseError(f"expected a number, got {type(value).__name__}", field=field)
    m = _QTY.match(value)
    if not m:
        raise ConfigParseError(f"cannot read {value!r} as a quantity", field=field)
    number, suffix = float(m.group(1)), m.group(2)
    if not suffix:
        return number
    spellings = _UNITS.get(unit, ()) if unit else ()
    for sp in sorted(spellings, key=len, reverse=True):
        if suffix.endswith(sp):
            prefix = suffix[: -len(sp)]
            if prefix in _PREFIX:
                return number * _PREFIX[prefix]
    if unit is None:
        raise ConfigParseError(f"{value!r}: this field is dimensionless", field=field)
    if suffix in _PREFIX:
        return number * _PREFIX[suffix]
    raise ConfigParseError(f"{value!r}: expected a quantity in {unit}", field=field)


@dataclass
class RunConfig:
    """Everything a CLI command needs besides its own flags."""

    scenario: Scenario
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    mean_gain: Optional[float] = None  # None when the gains were given explicitly


# -- line tracking ------------------------------------------------------------

def _line_index(node, path=(), out=None) -> dict:
    # map each key path to the 1-based line where its value starts
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            out[p] = k.start_mark.line + 1
            _line_index(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (i,)
            out[p] = v.start_mark.line + 1
            _line_index(v, p, out)
    return out


def _dotted(path) -> str:
    s = ""
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else (("." if s else "") + str(p))
    return s


class _Builder:
    def __init__(self, lines: dict, source: str):
        self.lines = lines
        self.source = source

    def fail(self, msg: str, path=()):
        line = None
        for cut in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:cut]))
            if line:
                break
        raise ConfigParseError(msg, line, _dotted(path) or None, self.source)

    def table(self, doc, path, allowed) -> dict:
        if doc is None:
            return {}
        if not isinstance(doc, dict):
            self.fail("expected a table", path)
        for k in doc:
            if k not in allowed:
                self.fail(f"unknown key {k!r} (expected one of {sorted(allowed)})", path + (k,))
        return doc

    def number(self, value, unit, path) -> float:
        try:
            return parse_quantity(value, unit, _dotted(path))
        except ConfigParseError as e:
            self.fail(e.message, path)

    def integer(self, value, path) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(f"expected an integer, got {value!r}", path)
        return value

    def params(self, cls, doc, units, path, base=None) -> dict:
        names = {f.name for f in fields(cls)}
        doc = self.table(doc, path, names)
        out = dict(base or {})
        for k, v in doc.items():
            if k == "num_subchannels":
                out[k] = self.integer(v, path + (k,))
            else:
                out[k] = self.number(v, units.get(k), path + (k,))
        return out


def _build(doc: Any, lines: dict, source: str, seed: Optional[int]) -> RunConfig:
    b = _Builder(lines, source)
    doc = b.table(doc, (), {"seed", "system", "users", "channel", "solver"})

    file_seed = b.integer(doc.get("seed", 0), ("seed",))
    seed = file_seed if seed is None else seed
    if seed < 0:
        b.fail("seed must be >= 0", ("seed",))

    system = SystemParams(**b.params(SystemParams, doc.get("system"), _SYSTEM_UNITS, ("system",)))

    udoc = doc.get("users", {"count": 2})
    origin = {}  # (user, field) -> path of the value in the document
    if isinstance(udoc, list):
        users = [UserParams(**b.params(UserParams, u, _USER_UNITS, ("users", i))) for i, u in enumerate(udoc)]
        origin = {(i, k): ("users", i, k) for i, u in enumerate(udoc) for k in (u or {})}
    else:
        udoc = b.table(udoc, ("users",), {"count", "defaults", "overrides"})
        count = b.integer(udoc.get("count", 2), ("users", "count"))
        base = b.params(UserParams, udoc.get("defaults"), _USER_UNITS, ("users", "defaults"))
        over = udoc.get("overrides") or {}
        if not isinstance(over, dict):
            b.fail("overrides must map user index to a table", ("users", "overrides"))
        users = []
        for i in range(count):
            users.append(UserParams(**b.params(UserParams, over.get(i), _USER_UNITS,
                                               ("users", "overrides", i), base)))
            for k in udoc.get("defaults") or {}:
                origin[(i, k)] = ("users", "defaults", k)
            for k in over.get(i) or {}:
                origin[(i, k)] = ("users", "overrides", i, k)
        for i in over:
            if not isinstance(i, int) or not 0 <= i < count:
                b.fail(f"override for user {i!r} outside 0..{count - 1}", ("users", "overrides", i))

    cdoc = b.table(doc.get("channel"), ("channel",), {"mean_gain", "gains"})
    if "gains" in cdoc:
        if "mean_gain" in cdoc:
            b.fail("give either gains or mean_gain, not both", ("channel",))
        try:
            gains = np.array(cdoc["gains"], dtype=float)
        except (TypeError, ValueError):
            b.fail("gains must be a K x N table of numbers", ("channel", "gains"))
        mean_gain = None
    else:
        mean_gain = b.number(cdoc.get("mean_gain", 1e-4), None, ("channel", "mean_gain"))
        if not mean_gain > 0:
            b.fail("mean_gain must be > 0", ("channel", "mean_gain"))
        gains = sample_gains(ChannelConfig(mean_gain, seed), len(users), system.num_subchannels) \
            if users and system.num_subchannels > 0 else np.zeros((len(users), 0))

    sdoc = b.table(doc.get("solver"), ("solver",), {f.name for f in fields(SolverConfig)})
    solver_kw = {}
    for k, v in sdoc.items():
        if k.startswith("max_"):
            solver_kw[k] = b.integer(v, ("solver", k))
        else:
            solver_kw[k] = b.number(v, None, ("solver", k))
    try:
        solver = SolverConfig(**solver_kw)
    except ValueError as e:
        b.fail(str(e), ("solver",))

    scenario = Scenario(system, tuple(users), gains, seed)
    try:
        validate_scenario(scenario)
    except ValueError as e:
        issues = getattr(e, "issues", None)
        first = issues[0].where if issues else ""
        path = tuple(int(p) if p.isdigit() else p for p in re.split(r"[.\[\]]+", first) if p)
        if path and path[0] == "gains":
            path = ("channel",) + path
        elif len(path) == 3 and path[0] == "users":
            path = origin.get((path[1], path[2]), ("users",))
        b.fail(str(e), path)
    return RunConfig(scenario, solver, seed, mean_gain)


def loads_config(text: str, source: str = "<string>", seed: Optional[int] = None) -> RunConfig:
    """Parse a scenario document; ``seed`` overrides the one in the document."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        raise ConfigParseError(e.problem or str(e), mark.line + 1 if mark else None, None, source) from None
    lines = _line_index(node) if node is not None else {}
    return _build(doc, lines, source, seed)


def load_config(path, seed: Optional[int] = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigParseError(f"cannot read file: {e.strerror}", source=str(p)) from None
    return loads_config(text, str(p), seed)


def default_config(seed: int = 0) -> RunConfig:
    return loads_config("{}", "<defaults>", seed)


# -- writing ------------------------------------------------------------------

def scenario_document(cfg: RunConfig) -> dict:
    """Plain-data form of a configuration with the gain matrix written out.

    Floats are kept as Python floats so JSON/YAML writers emit their
    shortest round-trip representation; re-reading gives identical arrays.
    """
    s = cfg.scenario
    return {
        "seed": int(cfg.seed),
        "system": asdict(s.system),
        "users": [asdict(u) for u in s.users],
        "channel": {"gains": [[float(x) for x in row] for row in s.gains]},
        "solver": asdict(cfg.solver),
    }


def dump_scenario(cfg: RunConfig, fmt: str = "json") -> str:
    doc = scenario_document(cfg)
    if fmt == "json":
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "yaml":
        return yaml.safe_dump(doc, sort_keys=False)
    raise ValueError(f"unknown format {fmt!r}")

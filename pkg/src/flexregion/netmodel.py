"""Multi-phase unbalanced feeder model and bus admittance assembly."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

PHASES = ("a", "b", "c")


def _phase_tuple(phases: Union[str, Iterable[str]]) -> tuple:
    ps = tuple(str(p).lower() for p in phases)
    return tuple(p for p in PHASES if p in ps) if set(ps) <= set(PHASES) else ps


@dataclass(frozen=True)
class Bus:
    id: str
    phases: tuple
    connection: str = "Y"
    v_min: float = 0.95
    v_max: float = 1.05
    is_slack: bool = False

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "phases", _phase_tuple(self.phases))
        conn = {"Y": "Y", "D": "D", "DELTA": "D", "Δ": "D"}.get(str(self.connection).upper(), self.connection)
        object.__setattr__(self, "connection", conn)


@dataclass(frozen=True, eq=False)
class Line:
    """Series-impedance branch; ``z`` is in ohm over ``phases`` (shared phases by default)."""

    id: str
    from_bus: str
    to_bus: str
    z: np.ndarray
    i_max: float = np.inf
    phases: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "from_bus", str(self.from_bus))
        object.__setattr__(self, "to_bus", str(self.to_bus))
        z = np.atleast_2d(np.asarray(self.z, dtype=complex))
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        if self.phases is not None:
            object.__setattr__(self, "phases", _phase_tuple(self.phases))


@dataclass(frozen=True)
class NetworkModel:
    buses: tuple
    lines: tuple
    base_kv: float = 4.16
    base_kva: float = 1000.0
    name: str = ""
    v_source: float = 1.0  # slack voltage magnitude, p.u.

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    # per-unit bases; powers of every phase are on base_kva, voltages line-to-neutral
    @property
    def v_base(self) -> float:
        return self.base_kv * 1e3 / np.sqrt(3.0)

    @property
    def z_base(self) -> float:
        return self.v_base ** 2 / (self.base_kva * 1e3)

    @property
    def i_base(self) -> float:
        return self.base_kva * 1e3 / self.v_base

    def bus(self, bus_id: str) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    @property
    def slack(self) -> Bus:
        slacks = [b for b in self.buses if b.is_slack]
        if len(slacks) != 1:
            raise ValueError("network must have exactly one slack bus")
        return slacks[0]

    def line_phases(self, line: Line) -> tuple:
        if line.phases is not None:
            return line.phases
        fb, tb = self.bus(line.from_bus), self.bus(line.to_bus)
        return tuple(p for p in fb.phases if p in tb.phases)

    def terminals(self) -> list:
        """Ordered (bus id, phase) pairs; absent phases have no terminal."""
        return [(b.id, p) for b in self.buses for p in b.phases]

    def without_line(self, line_id: str) -> "NetworkModel":
        return replace(self, lines=tuple(l for l in self.lines if l.id != line_id))

    def with_line(self, line: Line) -> "NetworkModel":
        return replace(self, lines=self.lines + (line,))


def validate_network(net: NetworkModel) -> list:
    """Return a list of human-readable problems; empty means the network is usable."""
    diags = []
    ids = [b.id for b in net.buses]
    if len(set(ids)) != len(ids):
        diags.append("duplicate bus ids")
    bus_map = {b.id: b for b in net.buses}
    for b in net.buses:
        if not b.phases:
            diags.append(f"bus {b.id}: no phases")
        elif not set(b.phases) <= set(PHASES):
            diags.append(f"bus {b.id}: unknown phase in {b.phases}")
        if not b.v_min < b.v_max:
            diags.append(f"bus {b.id}: v_min must be below v_max")
        if b.connection not in ("Y", "D"):
            diags.append(f"bus {b.id}: connection must be Y or D")
    n_slack = sum(b.is_slack for b in net.buses)
    if not net.v_source > 0:
        diags.append("source voltage must be positive")
    if n_slack == 0:
        diags.append("no slack bus")
    elif n_slack > 1:
        diags.append("multiple slack buses")
    line_ids = [l.id for l in net.lines]
    if len(set(line_ids)) != len(line_ids):
        diags.append("duplicate line ids")

    good_lines = []
    for l in net.lines:
        missing = [x for x in (l.from_bus, l.to_bus) if x not in bus_map]
        if missing:
            diags.append(f"line {l.id}: references missing bus {', '.join(missing)}")
            continue
        if l.from_bus == l.to_bus:
            diags.append(f"line {l.id}: both ends on bus {l.from_bus}")
            continue
        fb, tb = bus_map[l.from_bus], bus_map[l.to_bus]
        phases = net.line_phases(l)
        if not phases:
            diags.append(f"line {l.id}: no shared phases between {fb.id} and {tb.id}")
            continue
        if not (set(phases) <= set(fb.phases) and set(phases) <= set(tb.phases)):
            diags.append(f"line {l.id}: phases {phases} not present at both ends")
            continue
        if l.z.shape != (len(phases), len(phases)):
            diags.append(f"line {l.id}: impedance is {l.z.shape}, expected {len(phases)}x{len(phases)}")
            continue
        if not np.allclose(l.z, l.z.T, rtol=1e-12, atol=0.0):
            diags.append(f"line {l.id}: impedance matrix not symmetric")
        if not l.i_max > 0:
            diags.append(f"line {l.id}: i_max must be positive")
        if np.linalg.cond(l.z) > 1e12:
            diags.append(f"line {l.id}: singular impedance matrix")
            continue
        good_lines.append((l, phases))

    if n_slack >= 1 and not any("phases" in d and d.startswith("bus") for d in diags):
        slack = next(b for b in net.buses if b.is_slack)
        adj = {t: [] for t in net.terminals()}
        for l, phases in good_lines:
            for p in phases:
                adj[(l.from_bus, p)].append((l.to_bus, p))
                adj[(l.to_bus, p)].append((l.from_bus, p))
        seen = {(slack.id, p) for p in slack.phases}
        queue = deque(seen)
        while queue:
            t = queue.popleft()
            for u in adj.get(t, ()):
                if u not in seen:
                    seen.add(u)
                    queue.append(u)
        dead_buses = sorted({b for (b, p) in adj if (b, p) not in seen}, key=ids.index)
        if dead_buses:
            diags.append("network not connected: unreachable " + ", ".join(dead_buses))
    return diags


def build_admittance(net: NetworkModel, unit: str = "pu") -> np.ndarray:
    """Nodal admittance over all bus-phase terminals (``net.terminals()`` order).

    ``unit`` is ``"pu"`` or ``"siemens"``.  Lines are stamped in sorted-id
    order so the result does not depend on the order of ``net.lines``.
    """
    if unit not in ("pu", "siemens"):
        raise ValueError("unit must be 'pu' or 'siemens'")
    index = {t: i for i, t in enumerate(net.terminals())}
    n = len(index)
    Y = np.zeros((n, n), dtype=complex)
    zscale = net.z_base if unit == "pu" else 1.0
    for line in sorted(net.lines, key=lambda l: l.id):
        yb = line_admittance(line, zscale)
        phases = net.line_phases(line)
        fi = [index[(line.from_bus, p)] for p in phases]
        ti = [index[(line.to_bus, p)] for p in phases]
        Y[np.ix_(fi, fi)] += yb
        Y[np.ix_(ti, ti)] += yb
        Y[np.ix_(fi, ti)] -= yb
        Y[np.ix_(ti, fi)] -= yb
    return Y


def line_admittance(line: Line, z_scale: float = 1.0) -> np.ndarray:
    z = line.z / z_scale
    if np.linalg.cond(z) > 1e12:
        raise ValueError(f"line {line.id}: singular per-phase impedance matrix")
    yb = np.linalg.inv(z)
    return 0.5 * (yb + yb.T)


# --------------------------------------------------------------------------
# JSON feeder files
# --------------------------------------------------------------------------

def _z_from_json(z) -> np.ndarray:
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 1, 2)
    return arr[..., 0] + 1j * arr[..., 1]


def network_from_dict(doc: dict) -> NetworkModel:
    base = doc.get("base", {})
    buses = [Bus(id=b["id"], phases=b["phases"], connection=b.get("connection", "Y"),
                 v_min=b.get("v_min", 0.95), v_max=b.get("v_max", 1.05),
                 is_slack=b.get("is_slack", False)) for b in doc["buses"]]
    lines = [Line(id=l["id"], from_bus=l["from_bus"], to_bus=l["to_bus"], z=_z_from_json(l["z"]),
                  i_max=l.get("i_max", np.inf) if l.get("i_max") is not None else np.inf,
                  phases=l.get("phases")) for l in doc["lines"]]
    return NetworkModel(buses=buses, lines=lines, base_kv=base.get("kv", 4.16),
                        base_kva=base.get("kva", 1000.0), name=doc.get("name", ""),
                        v_source=base.get("v_source", 1.0))


def network_to_dict(net: NetworkModel) -> dict:
    return {
        "name": net.name,
        "base": {"kv": net.base_kv, "kva": net.base_kva, "v_source": net.v_source},
        "buses": [{"id": b.id, "phases": "".join(b.phases), "connection": b.connection,
                   "v_min": b.v_min, "v_max": b.v_max, "is_slack": b.is_slack} for b in net.buses],
        "lines": [{"id": l.id, "from_bus": l.from_bus, "to_bus": l.to_bus,
                   "z": np.stack([l.z.real, l.z.imag], axis=-1).tolist(),
                   "i_max": None if not np.isfinite(l.i_max) else l.i_max,
                   **({"phases": "".join(l.phases)} if l.phases is not None else {})}
                  for l in net.lines],
    }


def load_network(path: Union[str, Path]) -> NetworkModel:
    with open(path, encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))


def save_network(net: NetworkModel, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=1)

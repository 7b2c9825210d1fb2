"""Synthetic feeders, fleets, profiles and error histories.

The bundled 25-bus test feeder and its data files are produced by the
functions here (``python -m flexregion.synthetic`` regenerates them).  The
random radial generator feeds property tests and runtime benchmarks.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .devices import BessUnit, ControllableLoad, DerFleet, FixedLoad, PvUnit
from .netmodel import Bus, Line, NetworkModel, save_network
from .uncertainty import Gmm, sample_gmm

MILE_FT = 5280.0

# overhead line phase-impedance matrices, ohm per mile
Z_3PH = np.array([
    [0.3465 + 1.0179j, 0.1560 + 0.5017j, 0.1580 + 0.4236j],
    [0.1560 + 0.5017j, 0.3375 + 1.0478j, 0.1535 + 0.3849j],
    [0.1580 + 0.4236j, 0.1535 + 0.3849j, 0.3414 + 1.0348j],
])
Z_3PH_LIGHT = np.array([
    [0.7526 + 1.1814j, 0.1580 + 0.4236j, 0.1560 + 0.5017j],
    [0.1580 + 0.4236j, 0.7475 + 1.1983j, 0.1535 + 0.3849j],
    [0.1560 + 0.5017j, 0.1535 + 0.3849j, 0.7436 + 1.2112j],
])
Z_1PH = np.array([[1.3292 + 1.3475j]])

# cloudy-day mixture of PV forecast errors (p.u. of rating)
CLOUDY_MIXTURE = Gmm([0.4024, 0.1080, 0.4896], [0.0024, 0.0688, 0.0168],
                     [6.4572e-5, 0.0172, 9.4331e-4])

DATA_DIR = Path(__file__).resolve().parent / "data"


def _line(lid, a, b, length_ft, zmat, i_max, phases=None):
    sub = zmat
    if phases is not None and zmat.shape[0] == 3 and len(phases) < 3:
        idx = ["abc".index(p) for p in phases]
        sub = zmat[np.ix_(idx, idx)]
    return Line(lid, a, b, sub * (length_ft / MILE_FT), i_max, phases)


# --------------------------------------------------------------------------
# bundled 25-bus feeder
# --------------------------------------------------------------------------

# (id, from, to, length ft, kind, ampacity A); buses are created from the endpoints
_FEEDER25_LINES = [
    ("L01", "650", "632", 600, "3", 260),
    ("L02", "632", "633", 525, "3", 260),
    ("L03", "633", "634", 450, "3", 235),
    ("L04", "634", "645", 525, "3", 235),
    ("L05", "645", "646", 450, "3", 210),
    ("L06", "646", "671", 600, "3", 210),
    ("L07", "671", "680", 450, "3", 180),
    ("L08", "680", "684", 525, "3", 170),
    ("L09", "684", "611", 450, "3", 155),
    ("L10", "611", "652", 450, "3", 145),
    ("L11", "652", "692", 525, "3", 130),
    ("L12", "692", "675", 450, "3", 115),
    ("L13", "645", "701", 450, "3L", 115),
    ("L14", "701", "702", 525, "3L", 105),
    ("L15", "702", "703", 450, "3L", 90),
    ("L16", "684", "711", 450, "3L", 105),
    ("L17", "711", "712", 450, "3L", 90),
    ("L18", "712", "713", 525, "3L", 80),
    ("L19", "634", "720", 600, "a", 70),
    ("L20", "671", "721", 525, "b", 70),
    ("L21", "721", "722", 450, "b", 60),
    ("L22", "652", "730", 525, "c", 70),
    ("L23", "702", "731", 450, "a", 60),
    ("L24", "712", "732", 450, "c", 60),
]

# peak fixed load per bus: (kW per phase a, b, c), power factor
_FEEDER25_LOADS = {
    "632": ((18, 22, 20), 0.95), "633": ((24, 18, 20), 0.95), "634": ((20, 20, 26), 0.93),
    "645": ((14, 22, 16), 0.95), "646": ((20, 16, 22), 0.94), "671": ((26, 24, 28), 0.93),
    "680": ((18, 16, 14), 0.95), "684": ((20, 22, 18), 0.95), "611": ((16, 20, 22), 0.94),
    "652": ((22, 18, 16), 0.95), "692": ((14, 16, 18), 0.95), "675": ((24, 20, 22), 0.93),
    "701": ((14, 12, 16), 0.95), "702": ((12, 14, 10), 0.95), "703": ((16, 12, 14), 0.94),
    "711": ((12, 14, 16), 0.95), "712": ((14, 10, 12), 0.95), "713": ((12, 16, 12), 0.94),
    "720": ((24, 0, 0), 0.95), "721": ((0, 18, 0), 0.95), "722": ((0, 20, 0), 0.94),
    "730": ((0, 0, 22), 0.95), "731": ((18, 0, 0), 0.95), "732": ((0, 0, 20), 0.94),
}

# (id, bus, phases, kVA)
_FEEDER25_PV = [
    ("PV1", "633", "abc", 250), ("PV2", "671", "abc", 200), ("PV3", "611", "abc", 150),
    ("PV4", "702", "abc", 120), ("PV5", "712", "abc", 100), ("PV6", "720", "a", 40),
    ("PV7", "722", "b", 60), ("PV8", "731", "a", 50), ("PV9", "732", "c", 80),
]
_FEEDER25_BESS = [("B1", "680", "abc", 100)]
# (id, bus, phases, peak kW, power factor)
_FEEDER25_CL = [
    ("CL1", "632", "abc", 45, 0.95), ("CL2", "646", "abc", 60, 0.95), ("CL3", "684", "abc", 40, 0.97),
    ("CL4", "692", "abc", 50, 0.95), ("CL5", "703", "abc", 30, 0.96), ("CL6", "713", "abc", 30, 0.96),
    ("CL7", "675", "abc", 45, 0.95), ("CL8", "721", "b", 15, 0.95), ("CL9", "730", "c", 15, 0.95),
    ("CL10", "731", "a", 12, 0.97),
]


def feeder25() -> NetworkModel:
    phases = {"650": "abc"}
    lines = []
    for lid, a, b, ft, kind, amp in _FEEDER25_LINES:
        if kind in ("3", "3L"):
            z = Z_3PH if kind == "3" else Z_3PH_LIGHT
            lines.append(_line(lid, a, b, ft, z, amp))
            phases[b] = "abc"
        else:
            lines.append(_line(lid, a, b, ft, Z_1PH, amp, kind))
            phases[b] = kind
    buses = [Bus(bid, ph, is_slack=(bid == "650")) for bid, ph in phases.items()]
    return NetworkModel(buses, lines, base_kv=4.16, base_kva=1000.0, name="feeder25", v_source=1.03)


def _tan(pf):
    return math.sqrt(1 - pf * pf) / pf


def fleet25_dict() -> dict:
    """Fleet file contents (kW / kVA, peak values) for the bundled feeder."""
    ncl = []
    for bus, (kw, pf) in _FEEDER25_LOADS.items():
        for p, ph in zip(kw, "abc"):
            if p:
                ncl.append({"bus": bus, "phase": ph, "p_kw": p, "q_kvar": round(p * _tan(pf), 4)})
    return {
        "controllable_loads": [{"id": i, "bus": b, "phases": ph, "p_sched_kw": p,
                                "low": 0.8, "high": 1.2, "tan_theta": round(_tan(pf), 6)}
                               for i, b, ph, p, pf in _FEEDER25_CL],
        "pv": [{"id": i, "bus": b, "phases": ph, "s_kva": s, "q_mode": "full-circle"}
               for i, b, ph, s in _FEEDER25_PV],
        "bess": [{"id": i, "bus": b, "phases": ph, "s_kva": s, "p_sched_kw": 0.0, "q_sched_kvar": 0.0}
                 for i, b, ph, s in _FEEDER25_BESS],
        "ncl": ncl,
    }


# --------------------------------------------------------------------------
# daily profiles and error histories
# --------------------------------------------------------------------------

def load_shape(minutes: np.ndarray) -> np.ndarray:
    """Residential-style daily load multiplier in (0, 1]."""
    h = minutes / 60.0
    base = 0.45 + 0.18 * np.exp(-0.5 * ((h - 7.5) / 1.3) ** 2) + 0.55 * np.exp(-0.5 * ((h - 19.0) / 2.2) ** 2)
    base += 0.12 * np.exp(-0.5 * ((h - 13.0) / 3.0) ** 2)
    return base / base.max()


def pv_shape(minutes: np.ndarray, day_type: str, rng: np.random.Generator) -> np.ndarray:
    """Available PV output as a fraction of rating."""
    h = minutes / 60.0
    bell = np.clip(np.sin(np.pi * (h - 6.0) / 13.0), 0.0, None) ** 1.3
    if day_type == "sunny":
        return 0.9 * bell
    if day_type == "cloudy":
        # passing clouds: smoothed random dips
        dips = rng.uniform(0.35, 1.0, size=h.size)
        k = np.ones(5) / 5
        dips = np.convolve(dips, k, mode="same")
        return 0.85 * bell * dips
    if day_type == "overcast":
        return 0.55 * bell * (0.8 + 0.2 * np.sin(h))
    raise ValueError(f"unknown day type {day_type!r}")


def make_profiles(fleet_doc: dict, day_type: str = "sunny", seed: int = 7, step_min: int = 5) -> list:
    """Rows of a 24-h profile table at ``step_min`` resolution.

    Columns: ``time``, ``p:<bus>.<phase>`` / ``q:<bus>.<phase>`` fixed-load
    kW/kvar, ``cl:<id>`` controllable-load schedule kW and ``pv:<id>`` PV
    availability kW.
    """
    rng = np.random.default_rng(seed)
    minutes = np.arange(0, 24 * 60, step_min, dtype=float)
    shape = load_shape(minutes)
    pv = pv_shape(minutes, day_type, rng)
    rows = []
    noise = {}
    for ld in fleet_doc["ncl"]:
        noise[(ld["bus"], ld["phase"])] = 1.0 + 0.05 * rng.standard_normal(minutes.size)
    for k, m in enumerate(minutes):
        row = {"time": f"{int(m) // 60:02d}:{int(m) % 60:02d}"}
        for ld in fleet_doc["ncl"]:
            f = shape[k] * noise[(ld["bus"], ld["phase"])][k]
            key = f"{ld['bus']}.{ld['phase']}"
            row[f"p:{key}"] = round(ld["p_kw"] * f, 4)
            row[f"q:{key}"] = round(ld["q_kvar"] * f, 4)
        for cl in fleet_doc["controllable_loads"]:
            row[f"cl:{cl['id']}"] = round(cl["p_sched_kw"] * shape[k], 4)
        for p in fleet_doc["pv"]:
            row[f"pv:{p['id']}"] = round(p["s_kva"] * pv[k], 4)
        rows.append(row)
    return rows


def write_csv(rows: list, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# one mixture per (day type, bin); the cloudy day uses the measured-style mixture throughout
_HISTORY_MIXTURES = {
    "sunny": [Gmm([1.0], [0.0], [0.004 ** 2]), Gmm([0.7, 0.3], [0.0, 0.01], [0.006 ** 2, 0.02 ** 2]),
              Gmm([0.7, 0.3], [0.0, 0.005], [0.008 ** 2, 0.025 ** 2]), Gmm([1.0], [-0.005], [0.012 ** 2])],
    "cloudy": [Gmm([0.6, 0.4], [0.0, 0.02], [0.01 ** 2, 0.05 ** 2]), CLOUDY_MIXTURE, CLOUDY_MIXTURE,
               Gmm([0.5, 0.5], [0.0, -0.03], [0.02 ** 2, 0.08 ** 2])],
    "overcast": [Gmm([0.5, 0.5], [0.0, 0.03], [0.01 ** 2, 0.04 ** 2]),
                 Gmm([0.6, 0.4], [0.01, 0.05], [0.02 ** 2, 0.08 ** 2]),
                 Gmm([1.0], [0.02], [0.05 ** 2])],  # overcast output never reaches the top bin
}


def make_error_history(n_per_bin: int = 1500, seed: int = 11) -> list:
    rng = np.random.default_rng(seed)
    rows = []
    for day, mixes in _HISTORY_MIXTURES.items():
        for b, g in enumerate(mixes):
            power = rng.uniform(0.25 * b, 0.25 * (b + 1) - 1e-9, size=n_per_bin)
            err = sample_gmm(g, n_per_bin, rng)
            rows += [{"day_type": day, "power_pu": round(float(p), 6), "error_pu": float(e)}
                     for p, e in zip(power, err)]
    return rows


# --------------------------------------------------------------------------
# random radial feeders
# --------------------------------------------------------------------------

def random_radial_feeder(n_buses: int, seed=None, three_phase_fraction: float = 0.7,
                         base_kv: float = 4.16, base_kva: float = 1000.0,
                         length_ft=(150.0, 450.0)) -> NetworkModel:
    """Random radial feeder with a three-phase trunk and single-phase laterals."""
    rng = np.random.default_rng(seed)
    buses = [Bus("0", "abc", is_slack=True)]
    phases = {"0": "abc"}
    lines = []
    for i in range(1, n_buses):
        three = [b for b in phases if len(phases[b]) == 3]
        if rng.random() < three_phase_fraction or not three:
            parent = three[int(rng.integers(max(0, len(three) - 6), len(three)))] if three else "0"
            ph = "abc"
        else:
            cand = list(phases)
            parent = cand[int(rng.integers(len(cand)))]
            ph = str(rng.choice(list(phases[parent])))
        ft = float(rng.uniform(*length_ft))
        z = Z_3PH if ph == "abc" else Z_1PH
        lines.append(_line(f"l{i}", parent, str(i), ft, z, float(rng.uniform(150, 400)),
                           None if ph == "abc" else ph))
        phases[str(i)] = ph
        buses.append(Bus(str(i), ph))
    return NetworkModel(buses, lines, base_kv, base_kva, name=f"random{n_buses}")


def random_fleet(net: NetworkModel, seed=None, load_kw=(5.0, 25.0), n_pv: int = 6, n_cl: int = 10,
                 n_bess: int = 1, pv_level: float = 0.6, pv_sigma: float = 0.05) -> DerFleet:
    """Fixed loads on every non-slack bus-phase plus randomly placed devices (p.u.)."""
    rng = np.random.default_rng(seed)
    kva = net.base_kva
    others = [b for b in net.buses if not b.is_slack]
    ncl = []
    for b in others:
        for p in b.phases:
            pk = rng.uniform(*load_kw) / kva
            ncl.append(FixedLoad(b.id, p, pk, 0.3 * pk))
    pick = lambda k: [others[int(i)] for i in rng.choice(len(others), size=min(k, len(others)), replace=False)]
    pv = []
    for j, b in enumerate(pick(n_pv)):
        s = rng.uniform(30, 150) / kva
        pv.append(PvUnit(f"pv{j}", b.id, b.phases, s, pv_level * s, pv_sigma * s))
    cl = []
    for j, b in enumerate(pick(n_cl)):
        p = rng.uniform(5, 30) / kva
        cl.append(ControllableLoad.from_multipliers(f"cl{j}", b.id, b.phases, p, tan_theta=0.2))
    bess = [BessUnit(f"b{j}", b.id, b.phases, rng.uniform(50, 150) / kva) for j, b in enumerate(pick(n_bess))]
    return DerFleet(cl, pv, bess, ncl)


def write_bundled(out_dir: Optional[Path] = None) -> None:
    out = Path(out_dir or DATA_DIR)
    out.mkdir(parents=True, exist_ok=True)
    save_network(feeder25(), out / "feeder25.json")
    fleet = fleet25_dict()
    (out / "fleet25.json").write_text(json.dumps(fleet, indent=1), encoding="utf-8")
    for day in ("sunny", "cloudy", "overcast"):
        write_csv(make_profiles(fleet, day), out / f"profiles_{day}.csv")
    write_csv(make_error_history(), out / "error_history.csv")
    write_error_table(out)


def write_error_table(out_dir: Optional[Path] = None) -> None:
    """Fit the bundled history and store the table the command line uses by default."""
    import warnings
    from .uncertainty import fit_error_table, read_error_history
    out = Path(out_dir or DATA_DIR)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = fit_error_table(read_error_history(out / "error_history.csv"), k_max=5, seed=0)
    (out / "error_table.json").write_text(json.dumps(table.to_dict(), indent=1, sort_keys=True) + "\n",
                                          encoding="utf-8")


if __name__ == "__main__":
    write_bundled()

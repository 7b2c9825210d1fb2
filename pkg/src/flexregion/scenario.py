"""Fleet files, daily profiles and per-snapshot fleet construction."""

from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .devices import BessUnit, ControllableLoad, DerFleet, FixedLoad, PvUnit
from .uncertainty import ErrorScenarioTable, gmm_moments


def fleet_from_dict(doc: dict, base_kva: float) -> DerFleet:
    """Build a fleet from kW/kVA figures, converting to p.u. on ``base_kva``."""
    s = 1.0 / base_kva
    cls_ = []
    for d in doc.get("controllable_loads", []):
        p = d["p_sched_kw"] * s
        lo = d["p_low_kw"] * s if "p_low_kw" in d else d.get("low", 0.8) * p
        hi = d["p_high_kw"] * s if "p_high_kw" in d else d.get("high", 1.2) * p
        cls_.append(ControllableLoad(d["id"], d["bus"], tuple(d["phases"]), p, lo, hi,
                                     float(d.get("tan_theta", 0.0))))
    pvs = [PvUnit(d["id"], d["bus"], tuple(d["phases"]), d["s_kva"] * s,
                  d.get("forecast_mu_kw", 0.0) * s, d.get("forecast_sigma_kw", 0.0) * s,
                  d.get("q_mode", "full-circle"), d.get("pf_limit"),
                  None if d.get("p_sched_kw") is None else d["p_sched_kw"] * s)
           for d in doc.get("pv", [])]
    bess = [BessUnit(d["id"], d["bus"], tuple(d["phases"]), d["s_kva"] * s, d.get("p_sched_kw", 0.0) * s,
                     d.get("q_sched_kvar", 0.0) * s,
                     None if d.get("p_energy_limit_kw") is None else d["p_energy_limit_kw"] * s)
            for d in doc.get("bess", [])]
    ncl = [FixedLoad(d["bus"], d["phase"], d["p_kw"] * s, d.get("q_kvar", 0.0) * s)
           for d in doc.get("ncl", [])]
    return DerFleet(cls_, pvs, bess, ncl)


def load_fleet(path, base_kva: float) -> DerFleet:
    return fleet_from_dict(json.loads(Path(path).read_text(encoding="utf-8")), base_kva)


def read_profiles(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"profile file {path} has no rows")
    if "time" not in rows[0]:
        raise ValueError(f"profile file {path} lacks a 'time' column")
    return rows


def subsample(rows: list, cadence_min: int = 30) -> list:
    """Keep rows whose ``HH:MM`` time falls on the snapshot cadence."""
    out = []
    for r in rows:
        hh, mm = r["time"].split(":")
        if (int(hh) * 60 + int(mm)) % cadence_min == 0:
            out.append(r)
    return out


def pv_forecast(point_pu: float, s_rating: float, table: Optional[ErrorScenarioTable], day_type: str):
    """Forecast moments (mu, sigma) and the raw error mixture for one PV.

    Errors are ``actual - point`` in p.u. of the inverter rating; nights
    (zero point forecast) carry no uncertainty.
    """
    if point_pu <= 0 or table is None:
        return max(point_pu, 0.0), 0.0, None
    g = table.lookup(day_type, point_pu / s_rating)
    mean, var = gmm_moments(g)
    mu = max(0.0, point_pu + s_rating * mean)
    return mu, s_rating * float(np.sqrt(var)), g


def snapshot_fleet(template: DerFleet, row: dict, base_kva: float,
                   table: Optional[ErrorScenarioTable] = None, day_type: str = "sunny") -> DerFleet:
    """Apply one profile row (kW figures) to a fleet template."""
    s = 1.0 / base_kva
    ncl = []
    for ld in template.ncl:
        key = f"{ld.bus}.{ld.phase}"
        p = float(row[f"p:{key}"]) * s if f"p:{key}" in row else ld.p
        q = float(row[f"q:{key}"]) * s if f"q:{key}" in row else ld.q
        ncl.append(FixedLoad(ld.bus, ld.phase, p, q))
    cls_ = []
    for ld in template.controllable_loads:
        col = f"cl:{ld.id}"
        if col in row and ld.p_sched > 0:
            f = float(row[col]) * s / ld.p_sched
            cls_.append(replace(ld, p_sched=ld.p_sched * f, p_low=ld.p_low * f, p_high=ld.p_high * f))
        else:
            cls_.append(ld)
    pvs = []
    for pv in template.pv:
        col = f"pv:{pv.id}"
        point = float(row[col]) * s if col in row else pv.forecast_mu
        mu, sigma, g = pv_forecast(point, pv.s_rating, table, day_type)
        if table is None:
            sigma = pv.forecast_sigma if col not in row else 0.0
        pvs.append(replace(pv, forecast_mu=mu, forecast_sigma=sigma, error_gmm=g, p_sched=None))
    return DerFleet(cls_, pvs, template.bess, ncl)

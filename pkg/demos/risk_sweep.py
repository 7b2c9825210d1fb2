"""Polygons in the evening peak for several voltage risk levels, drawn on one SVG.

    python demos/risk_sweep.py [out_dir]
"""

import sys
from pathlib import Path

from flexregion.drcc import build_state
from flexregion.netmodel import load_network
from flexregion.powerflow import GridModel
from flexregion.region import estimate_region, write_svg
from flexregion.scenario import load_fleet, read_profiles, snapshot_fleet
from flexregion.synthetic import DATA_DIR
from flexregion.uncertainty import ErrorScenarioTable, RiskConfig


def main(out_dir="demo_out", time="19:00", day="sunny"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net = load_network(DATA_DIR / "feeder25.json")
    grid = GridModel(net)
    table = ErrorScenarioTable.load(DATA_DIR / "error_table.json")
    template = load_fleet(DATA_DIR / "fleet25.json", net.base_kva)
    row = next(r for r in read_profiles(DATA_DIR / f"profiles_{day}.csv") if r["time"] == time)
    state = build_state(grid, snapshot_fleet(template, row, net.base_kva, table, day), time=time)

    polys, titles = [], []
    for eps_v in (0.01, 0.05, 0.1):
        poly = estimate_region(state.with_risk(RiskConfig(0.5, eps_v, 0.05)), 32)
        polys.append(poly)
        titles.append(f"eps_V={eps_v}")
        print(f"eps_V={eps_v:<5} area {poly.area * net.base_kva ** 2:10.1f} kW*kvar")
    write_svg(polys, out / "risk_sweep.svg", titles=titles)
    print(f"wrote {out / 'risk_sweep.svg'}")


if __name__ == "__main__":
    main(*sys.argv[1:])

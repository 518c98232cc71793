#!/usr/bin/env python3
"""Regenerates the bundled `segura-6m` fixture.

The basin aggregates (annual resources per source, annual demand per
category, golf area, source factors) are the published Segura figures; the
topology, daily shapes and forecast bands are synthetic but deterministic.

    python3 generate_segura.py      # writes segura-6m.scenario and segura-6m/*.csv
"""

import csv
import json
import math
from datetime import date, timedelta
from pathlib import Path

HERE = Path(__file__).resolve().parent
START = date(2024, 4, 2)
DAYS = 182
# The forecast files run a little past the horizon, as real feeds do.
FORECAST_DAYS = 200

RESOURCES = {
    "surface": 273.0,
    "groundwater": 491.0,
    "coastal": 81.0,
    "transfer": 312.0,
    "desalination": 302.0,
    "recycling": 263.0,
}
ADU_TOTAL = 1476.3
UDU_TOTAL = 200.9
IDU_TOTAL = 8.5
GOLF_HA = 1400.0
WETLAND_TOTAL = 31.67
UDU_FRACTIONS = [0.070, 0.068, 0.075, 0.080, 0.087, 0.095, 0.105, 0.105, 0.090, 0.080, 0.073, 0.072]


def doy(d: date) -> int:
    return d.timetuple().tm_yday


def seasonal(d: date, peak_doy: int, amplitude: float) -> float:
    return 1.0 + amplitude * math.cos(2.0 * math.pi * (doy(d) - peak_doy) / 365.0)


def write_table(name: str, rows):
    path = HERE / "segura-6m" / name
    path.parent.mkdir(exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(rows[0])
        for r in rows[1:]:
            w.writerow([r[0].isoformat()] + [f"{v:.6f}" for v in r[1:]])


ADU_SHARES = [0.20, 0.16, 0.14, 0.12, 0.11, 0.10, 0.09, 0.08]
UDU_SHARES = [0.35, 0.30, 0.20, 0.15]


def adu_forecasts():
    """One table with a central column and two band columns per ADU."""
    header = ["date"]
    for i in range(len(ADU_SHARES)):
        header += [f"adu{i + 1:02}", f"adu{i + 1:02}_lower", f"adu{i + 1:02}_upper"]
    rows = [tuple(header)]
    for t in range(FORECAST_DAYS):
        d = START + timedelta(days=t)
        row = [d]
        for i, share in enumerate(ADU_SHARES):
            mean = ADU_TOTAL * share / 365.0
            peak = 190 + 5 * i
            v = mean * (seasonal(d, peak, 0.2) + 0.03 * math.sin(2.0 * math.pi * (t + i) / 7.0))
            spread = v * (0.02 + 0.10 * t / DAYS)
            row += [v, max(v - spread, 0.0), v + spread]
        rows.append(tuple(row))
    write_table("adu_forecast.csv", rows)


def headwaters():
    mean = RESOURCES["surface"] / 365.0
    rows = [("date", "value")]
    for t in range(DAYS):
        d = START + timedelta(days=t)
        rows.append((d, mean * seasonal(d, 100, 0.5)))
    write_table("headwaters.csv", rows)


def per_day(annual: float) -> float:
    return round(annual / 365.0, 6)


def node(id_, kind, **kw):
    return {"id": id_, "kind": kind, **kw}


def link(a, b, **kw):
    return {"from": a, "to": b, **kw}


def scenario():
    adus = [f"ADU{i + 1:02}" for i in range(len(ADU_SHARES))]
    udus = [f"UDU{i + 1:02}" for i in range(len(UDU_SHARES))]
    demand_nodes = {u: f"adu_zone{u[3:]}" for u in adus}
    demand_nodes.update({u: f"town{u[3:]}" for u in udus})
    demand_nodes.update({"IDU01": "sawmills", "SDU01": "golf", "WDU01": "wetland"})
    nodes = [
        node("headwaters", "source", source_kind="surface", availability={"csv": "segura-6m/headwaters.csv"}),
        node(
            "reservoir",
            "storage",
            min_volume=350.0,
            max_volume=1140.0,
            initial_volume=620.0,
            initial_kind="surface",
        ),
        node("river", "junction"),
        node("aqueduct", "source", source_kind="transfer", availability=per_day(RESOURCES["transfer"])),
        node("canal", "junction"),
        node("desal_plants", "source", source_kind="desalination", availability=per_day(RESOURCES["desalination"])),
        node("reuse_plants", "source", source_kind="recycling", availability=per_day(RESOURCES["recycling"])),
        node("aquifer", "source", source_kind="groundwater", availability=per_day(RESOURCES["groundwater"])),
        node("coastal_aquifer", "source", source_kind="groundwater", availability=per_day(RESOURCES["coastal"])),
    ]
    nodes += [node(n, "demand", unit=u) for u, n in demand_nodes.items()]
    nodes.append(node("sea", "sink"))

    def to(src, units):
        return [link(src, demand_nodes[u]) for u in units]

    links = [
        link("headwaters", "reservoir"),
        link("reservoir", "river", capacity=8.0),
        link("river", "sea", ecological_min=0.15),
        link("aqueduct", "canal", capacity=1.2, loss_fraction=0.02),
    ]
    links += to("river", adus + udus[:3] + ["IDU01", "SDU01", "WDU01"])
    links += to("canal", adus[:5] + udus)
    # The first town's intake from the desalination network exists
    # physically; the quality rules keep urban use of it at zero.
    links += to("desal_plants", adus[3:] + ["IDU01", "UDU01"])
    links += to("reuse_plants", adus[1:] + ["SDU01", "IDU01"])
    links += to("aquifer", adus[0::2] + ["UDU02", "UDU04", "IDU01"])
    links += to("coastal_aquifer", ["ADU06", "ADU08", "UDU04"])
    links += [link(n, "sea") for n in demand_nodes.values()]

    def forecast(unit):
        col = unit.lower()
        ref = "segura-6m/adu_forecast.csv"
        return {
            "type": "forecast_series",
            "series": {"csv": ref, "column": col},
            "lower": {"csv": ref, "column": f"{col}_lower"},
            "upper": {"csv": ref, "column": f"{col}_upper"},
        }

    units = [{"id": u, "kind": "ADU", "demand": forecast(u), "emission_factor": 0.05} for u in adus]
    units += [
        {
            "id": u,
            "kind": "UDU",
            "demand": {"type": "monthly_curve", "total": round(UDU_TOTAL * share, 6), "fractions": UDU_FRACTIONS},
            "emission_factor": 0.017432137,
        }
        for u, share in zip(udus, UDU_SHARES)
    ]
    units += [
        {
            "id": "IDU01",
            "kind": "IDU",
            "demand": {"type": "annual_uniform", "total": IDU_TOTAL},
            "emission_factor": 48.26,
        },
        {
            "id": "SDU01",
            "kind": "SDU",
            "demand": {"type": "annual_uniform", "total": round(GOLF_HA * 8000 / 1e6, 6)},
            "emission_factor": 0.6926,
            "benefit": {"type": "linear", "eur_per_m3": 12.66},
        },
        {
            "id": "WDU01",
            "kind": "WDU",
            "demand": {"type": "annual_uniform", "total": WETLAND_TOTAL},
            "emission_factor": -0.406,
        },
    ]
    sources = json.loads((HERE / "sources.json").read_text())
    for s in sources:
        if s["kind"] == "groundwater":
            s["rights_cap"] = 40.0
    return {
        "schema_version": 1,
        "name": "segura-6m",
        "volume_unit": "hm3",
        "horizon": {"start": START.isoformat(), "days": DAYS},
        "network": {"nodes": nodes, "links": links},
        "units": units,
        "sources": sources,
        "quality": {
            "UDU": ["surface", "groundwater", "transfer"],
            "ADU": ["surface", "groundwater", "desalination", "recycling", "transfer"],
            "IDU": ["surface", "groundwater", "desalination", "recycling", "transfer"],
            "SDU": ["surface", "groundwater", "desalination", "recycling", "transfer"],
            "WDU": ["surface", "groundwater", "desalination", "recycling", "transfer"],
        },
        "weights": {"deficit": 0.6, "economic": 0.1, "co2": 0.3},
        "normalizers": {"economic_eur": 5.0e8, "co2_kg": 1.5e6},
        "grid_emission_factor": 0.354,
        "rules": {"lexicographic": False, "binary_rules": False, "pwl_segments": 8, "derived_co2_check": True},
        "reference": {
            "resources": [
                {"name": "natural sources", "hm3": 764.0},
                {"name": "inter-community transfer", "hm3": 312.0},
                {"name": "desalination", "hm3": 302.0},
                {"name": "recycling", "hm3": 263.0},
                {"name": "non-draining coastal bodies", "hm3": 81.0},
            ],
            "resources_total": 1722.0,
            "demands": [
                {"name": "ADU", "hm3": ADU_TOTAL},
                {"name": "UDU", "hm3": UDU_TOTAL},
                {"name": "SDU", "hm3": 11.2},
                {"name": "IDU", "hm3": IDU_TOTAL},
            ],
            "demands_total": 1696.9,
            "golf": {"area_ha": GOLF_HA, "m3_per_ha": 8000.0, "hm3_per_year": 11.2},
        },
    }


def main():
    headwaters()
    adu_forecasts()
    (HERE / "segura-6m.scenario").write_text(json.dumps(scenario(), indent=2) + "\n")


if __name__ == "__main__":
    main()

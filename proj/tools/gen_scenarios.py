#!/usr/bin/env python3
"""Writes the bundled scenarios (JSON + profile tables) into scenarios/.

Profiles are synthetic: a solar bell between 06:00 and 18:00, a base load
with morning and evening peaks, and an evening block of flexible demand.
Everything is seeded, so rerunning reproduces the files byte for byte.
"""

import argparse
import json
import math
import pathlib
import random

SLOTS = 24
SERIES = ("inflexible", "preferred_flexible", "renewable")

TARIFF = {
    "alpha": 0.25,
    "beta": 0.5,
    "pi_p2p": 0.1,
    "wear_price": 0.02,
    "pi_as": [0.05 if 17 <= t <= 20 else 0.01 for t in range(SLOTS)],
}


def solar(scale, phase=0.0):
    out = []
    for t in range(SLOTS):
        x = (t + 0.5 - 6.0 - phase) / 12.0
        out.append(scale * math.sin(math.pi * x) if 0.0 < x < 1.0 else 0.0)
    return out


def load(base, morning, evening):
    return [base + (morning if 6 <= t <= 8 else 0.0) + (evening if 17 <= t <= 21 else 0.0)
            for t in range(SLOTS)]


def flexible(amount, start=18, hours=3):
    return [amount if start <= t < start + hours else 0.0 for t in range(SLOTS)]


def rounded(v):
    return [round(max(0.0, x), 3) for x in v]


def home(rng, solar_scale, phase=0.0):
    return {
        "inflexible": rounded(load(0.3 + 0.2 * rng.random(), 0.4 * rng.random(), 0.6 + 0.4 * rng.random())),
        "preferred_flexible": rounded(flexible(0.3 + 0.3 * rng.random(), start=17 + rng.randrange(3))),
        "renewable": rounded(solar(solar_scale, phase)),
    }


def battery(capacity=4.0, limit=1.5, initial=0.0):
    return {"capacity": capacity, "charge_limit": limit, "discharge_limit": limit,
            "efficiency": 0.95, "initial_soc": initial}


def write_scenario(out, name, description, prosumers, days, rho=0.5, max_iter=2000,
                   chain=None, reference=None):
    prof_dir = out / "profiles"
    prof_dir.mkdir(parents=True, exist_ok=True)
    day_files = []
    for d, day in enumerate(days, start=1):
        rel = f"profiles/{name}_day{d}.tsv"
        lines = ["prosumer\tseries\t" + "\t".join(f"h{t:02d}" for t in range(SLOTS))]
        for pid, series in enumerate(day):
            for s in SERIES:
                lines.append(f"{pid}\t{s}\t" + "\t".join(repr(float(x)) for x in series[s]))
        (out / rel).write_text("\n".join(lines) + "\n")
        day_files.append(rel)
    doc = {
        "schema": "tegrid-scenario/1",
        "name": name,
        "description": description,
        "tariff": TARIFF,
        "admm": {"rho": rho, "epsilon": 1e-6, "max_iterations": max_iter, "p_max": 10.0},
        "chain": chain or {"validators": 3, "block_interval_ms": 1000, "max_block_txs": 256},
        "prosumers": [{"id": i, "battery": b} for i, b in enumerate(prosumers)],
        "days": day_files,
    }
    if reference:
        doc["reference"] = reference
    (out / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=pathlib.Path,
                    default=pathlib.Path(__file__).resolve().parent.parent / "scenarios")
    args = ap.parse_args()
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    rng = random.Random(20240601)
    write_scenario(out, "single_prosumer", "One solar home; no counterparties.",
                   [battery()], [[home(rng, 2.0)]])

    # Hand-checkable: flat 1 kWh loads, a 3 kWh renewable block at 10-13 on
    # prosumer 0, an evening flexible hour on prosumer 1.
    tiny = [
        {"inflexible": [1.0] * SLOTS, "preferred_flexible": [0.0] * SLOTS,
         "renewable": [3.0 if 10 <= t <= 13 else 0.0 for t in range(SLOTS)]},
        {"inflexible": [1.0] * SLOTS, "preferred_flexible": [0.5 if t == 19 else 0.0 for t in range(SLOTS)],
         "renewable": [0.0] * SLOTS},
    ]
    write_scenario(out, "two_prosumer_tiny", "Two homes, one with a midday renewable block.",
                   [battery(2.0, 1.0), battery(2.0, 1.0)], [tiny],
                   chain={"validators": 3, "block_interval_ms": 1000, "max_block_txs": 256},
                   reference={"centralized_total_cost": 9.354391348})

    write_scenario(out, "complementary_pair", "Morning-shifted and evening-shifted solar homes.",
                   [battery(), battery()], [[home(rng, 2.5, -1.5), home(rng, 2.5, 1.5)]])

    write_scenario(out, "three_prosumer", "Three homes with unequal solar.",
                   [battery(), battery(2.0, 1.0), battery(6.0, 2.0)],
                   [[home(rng, 3.0), home(rng, 1.0, 0.5), home(rng, 0.0)]])

    write_scenario(out, "five_prosumer", "Five homes, mixed solar and batteries.",
                   [battery(4.0 + i, 1.0 + 0.25 * i) for i in range(5)],
                   [[home(rng, s, p) for s, p in ((3.0, -1.0), (2.0, 0.0), (1.0, 1.0), (0.5, 0.0), (0.0, 0.0))]])

    base = home(rng, 1.5)
    surplus = dict(base, renewable=rounded([2 * x for x in base["renewable"]]))
    middle = dict(home(rng, 0.0), renewable=base["renewable"])
    deficit = dict(home(rng, 0.0), renewable=[0.0] * SLOTS)
    write_scenario(out, "surplus_trio",
                   "Prosumer 0 has twice the solar of prosumer 1; prosumer 2 has neither "
                   "solar nor a battery.",
                   [battery(), battery(), battery(0.0)], [[surplus, middle, deficit]], rho=2.0)

    week_rng = random.Random(7)
    scales = [3.0, 2.5, 2.0, 1.5, 1.5, 1.0, 1.0, 0.5, 0.0, 0.0]
    week = []
    for day in range(7):
        cloud = 0.6 + 0.4 * week_rng.random()
        week.append([home(week_rng, s * cloud, week_rng.uniform(-1.0, 1.0)) for s in scales])
    write_scenario(out, "ten_prosumer_week", "Ten homes over seven daily scenarios.",
                   [battery(4.0, 1.5) for _ in scales], week, rho=2.0, max_iter=1500,
                   chain={"validators": 5, "block_interval_ms": 1000, "max_block_txs": 256})


if __name__ == "__main__":
    main()

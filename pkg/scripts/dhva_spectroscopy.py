"""Fourier peaks of the oscillating magnetization in 1/hbar, next to the periodic-orbit frequencies S/2pi."""
import argparse
import csv
import math
from pathlib import Path

from magres.cli import fold_frequency, load_scenario, run_scenario
from magres.orbits import find_periodic_orbits

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=ROOT / "configs" / "dhva.toml")
    ap.add_argument("--out", default=ROOT / "out" / "dhva")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    sc = load_scenario(args.config)
    man = run_scenario(sc, args.out, workers=args.workers)
    peaks = list(csv.DictReader(open(Path(args.out) / "peaks.csv", newline="")))
    st = sc.state
    res = find_periodic_orbits(sc.spec, st["kappa"], st["mu"], 2 * st["tau"], n_seeds=4)
    nyq = 0.5 / (sc.grid.values[1] - sc.grid.values[0])
    print("orbits (T <= tau): T, S/2pi, folded")
    for o in sorted(res.orbits, key=lambda o: o.action):
        if o.period <= st["tau"]:
            f = o.action / (2 * math.pi)
            print(f"  r={o.repetitions} T={o.period:9.4f}  {f:.5f}  {float(fold_frequency(f, nyq)):.5f}")
    for series in ("M_osc_num", "M_osc_formula"):
        print(series)
        for p in peaks:
            if p["series"] == series:
                print(f"  {float(p['frequency']):.5f}  {float(p['amplitude']):.3e}")
    print(f"outputs: {', '.join(man['outputs'])}")


if __name__ == "__main__":
    main()

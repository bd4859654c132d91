"""Exact chi at kappa = 0 against the two Landau normalizations, over the hbar grid of configs/landau.toml."""
import argparse
import csv
from pathlib import Path

from magres.cli import load_scenario, run_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=ROOT / "configs" / "landau.toml")
    ap.add_argument("--out", default=ROOT / "out" / "landau")
    args = ap.parse_args()
    man = run_scenario(load_scenario(args.config), args.out)
    rows = list(csv.DictReader(open(Path(args.out) / man["outputs"][0], newline="")))
    print(f"{'hbar':>8} {'chi':>14} {'rel err (chi_L)':>16} {'rel err (spinless)':>19}")
    for r in rows:
        print(f"{float(r['hbar']):8.4f} {float(r['chi']):14.10f} {float(r['rel_err']):16.3e} "
              f"{float(r['rel_err_spinless']):19.3e}")
    print(f"chi_L = {float(rows[0]['chi_L']):.6f}, spinless = {float(rows[0]['chi_L_spinless']):.6f}")


if __name__ == "__main__":
    main()

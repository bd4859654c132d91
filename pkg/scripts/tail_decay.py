"""Long-time tail of the smeared magnetization versus hbar, with the stretched-exponential fit."""
import argparse
import csv
from pathlib import Path

import numpy as np

from magres.cli import load_scenario, run_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=ROOT / "configs" / "tail.toml")
    ap.add_argument("--out", default=ROOT / "out" / "tail")
    args = ap.parse_args()
    sc = load_scenario(args.config)
    man = run_scenario(sc, args.out)
    rows = list(csv.DictReader(open(Path(args.out) / man["outputs"][0], newline="")))
    h = np.array([float(r["hbar"]) for r in rows])
    tail = np.array([float(r["tail"]) for r in rows])
    for k, (hb, t) in enumerate(zip(h, tail)):
        ratio = f"{tail[k - 1] / t:10.1f}" if k else ""
        print(f"{hb:8.4f} {t:12.3e} {ratio}")
    eps = 1.0 - sc.state["beta_exponent"]
    x, y = h ** -eps, np.log(tail)
    coef = np.polyfit(x, y, 1)
    r2 = 1 - np.sum((y - np.polyval(coef, x)) ** 2) / np.sum((y - y.mean()) ** 2)
    print(f"ln tail = {coef[1]:.2f} - {-coef[0]:.2f} hbar^-{eps:.1f}  (r2 = {r2:.4f})")


if __name__ == "__main__":
    main()

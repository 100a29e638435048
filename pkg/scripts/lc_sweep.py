"""MNA sweep of the L-C network against its closed form; writes a CSV."""

import argparse
import csv

import numpy as np

from enetmodel import circuits
from enetmodel import netlist as nl
from enetmodel.twoport import frequency_grid, mna_two_port


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--inductance", type=float, default=1e-9)
    ap.add_argument("--capacitance", type=float, default=1e-12)
    ap.add_argument("--points", type=int, default=64)
    ap.add_argument("--csv", default="lc_sweep.csv")
    args = ap.parse_args()

    sub = nl.parse(circuits.lc_network_text(args.inductance, args.capacitance)).subcircuit()
    worst = 0.0
    with open(args.csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "s11_db", "s21_db", "s21_deg", "max_abs_err"])
        for f in frequency_grid(1.0, 15e9, args.points, log=True):
            s = mna_two_port(sub, f)
            ref = np.array(circuits.lc_network_closed_form(f, args.inductance, args.capacitance))
            got = np.array([s.s11, s.s12, s.s21, s.s22])
            err = float(np.max(np.abs(got - ref)))
            worst = max(worst, err)
            w.writerow([repr(f), 20 * np.log10(abs(s.s11) + 1e-300),
                        20 * np.log10(abs(s.s21) + 1e-300), np.angle(s.s21, deg=True), err])
    print(f"max |dS| {worst:.2e} over {args.points} points -> {args.csv}")


if __name__ == "__main__":
    main()

"""Surrogate-driven sizing of a switched phase shifter to -45 deg at 2 GHz.

Trains the three variant sub-models and a family-wide CCI main model, runs
NSGA-II on the composed surrogate, then checks the Pareto front with the MNA
oracle.
"""

import argparse
import time

from enetmodel import circuits
from enetmodel import dataset as ds
from enetmodel import netlist as nl
from enetmodel import optimize as op
from enetmodel import pipeline as pl
from enetmodel import surrogate as sg

F = 2e9
POIS = ("insertion_phase_deg", "input_return_loss_db")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sub-rows", type=int, default=400)
    ap.add_argument("--main-rows", type=int, default=2000)
    ap.add_argument("--population", type=int, default=30)
    ap.add_argument("--generations", type=int, default=30)
    ap.add_argument("--phase", type=float, default=-45.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    t0 = time.perf_counter()

    subs = []
    for k, v in enumerate(circuits.PHASE_VARIANTS):
        d = ds.gen_sub_dataset(nl.parse(circuits.variant_text(v)), None,
                               ds.SamplerConfig(seed=k + 1, count=args.sub_rows), F)
        m, _, r2 = pl.fit_sub(d, pl.ModelConfig(), sg.TrainConfig(seed=k))
        subs.append(m)
        print(f"sub {v}: min R2 {min(r2):.3f}")
    family = circuits.phase_shifter_family()
    data = ds.gen_main_dataset(family, ds.SamplerConfig(seed=5, count=args.main_rows), F)
    main_model, _, r2 = pl.fit_main(data, POIS, "cci", pl.ModelConfig(), sg.TrainConfig(seed=0))
    print(f"main: R2 phase {r2[0]:.3f}, return loss {r2[1]:.3f}")

    net = nl.parse(circuits.phase_shifter_text("lppi", "lpt"))
    state = {"S1": 0, "S2": 1}
    targets = [op.Target("insertion_phase_deg", F, "eq", args.phase, tol=2.0, state=state),
               op.Target("input_return_loss_db", F, "lt", -20.0, state=state)]
    prob = op.SizingProblem(net, targets, op.SurrogateSimulator(subs, [main_model]))
    res = op.evolve(prob, op.Nsga2Config(population=args.population,
                                         generations=args.generations, seed=args.seed))
    chosen, reports = op.verify_front(res, prob)
    for c in chosen.checks:
        print(f"{c.poi}: predicted {c.predicted:.2f}, oracle {c.verified:.2f}")
    print(f"status {chosen.status}; {len(reports)} front members verified; "
          f"{time.perf_counter() - t0:.0f} s")
    for name, value in chosen.values.items():
        print(f"  {name} = {value:.4g}")


if __name__ == "__main__":
    main()

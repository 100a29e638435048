"""Write the phase-shifter family netlists and a sizing problem file.

    python scripts/write_inputs.py runs/inputs
"""

import argparse
import json
from pathlib import Path

from enetmodel import circuits


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    (args.out / "lc_network.net").write_text(circuits.lc_network_text())
    (args.out / "lna.net").write_text(circuits.two_stage_lna_text())
    for v in circuits.PHASE_VARIANTS:
        (args.out / f"{v}.net").write_text(circuits.variant_text(v))
    names = []
    for a in circuits.PHASE_VARIANTS:
        for b in circuits.PHASE_VARIANTS:
            name = f"ps_{a}_{b}.net"
            (args.out / name).write_text(circuits.phase_shifter_text(a, b))
            names.append(name)

    state = {"S1": 0, "S2": 1}
    problem = {
        "netlist": "ps_lppi_lpt.net",
        "simulator": "surrogate",
        "sub_models": [f"sub_{v}.json" for v in circuits.PHASE_VARIANTS],
        "main_models": ["main.json"],
        "targets": [
            {"poi": "insertion_phase_deg", "frequency": 2e9, "goal": "eq", "value": -45,
             "tol": 2, "state": state},
            {"poi": "input_return_loss_db", "frequency": 2e9, "goal": "lt", "value": -20,
             "state": state},
        ],
        "optimizer": {"population": 30, "generations": 30, "seed": 0},
    }
    (args.out / "problem.json").write_text(json.dumps(problem, indent=2) + "\n")
    print(f"{len(names)} phase shifters, {len(circuits.PHASE_VARIANTS)} variants -> {args.out}")


if __name__ == "__main__":
    main()

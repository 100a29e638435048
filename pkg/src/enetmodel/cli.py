"""Command-line front end.

Every command writes its outputs into ``--out DIR`` together with a
``<name>.manifest.json`` run manifest (argv, effective configuration and
its hash, seeds, input/output checksums, version, wall time).  ``replay``
re-executes a manifest and checks the outputs are byte-identical.

Exit codes: 0 success, 1 solver/training failure, 2 usage or file error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import compare as cmp
from . import dataset as ds
from . import netlist as nl
from . import optimize as op
from . import pipeline as pl
from . import surrogate as sg
from .poi import POI_NAMES, sweep_poi, write_sweep_csv
from .twoport import TwoPortError, frequency_grid, parse_grid, write_s2p

log = logging.getLogger("enetmodel")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2
DEFAULT_POIS = "insertion_phase_deg,input_return_loss_db"


class UsageError(Exception):
    pass


# --- manifest ----------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    cwd: str
    config: dict
    config_hash: str
    seeds: dict
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    version: str = __version__
    wall_time_s: float = 0.0

    def write(self, path):
        """Atomic: write a sibling temp file, then rename over the target."""
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))


class Run:
    """Bookkeeping for one command invocation."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.t0 = time.perf_counter()

    def input(self, path) -> Path:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"no such file: {path}")
        self.inputs.append(str(p))
        return p

    def output(self, filename: str) -> Path:
        p = self.out / filename
        self.outputs.append(str(p))
        return p

    def finish(self, seeds: dict):
        cfg = {k: v for k, v in vars(self.args).items() if k not in ("func", "out", "config")}
        m = RunManifest(
            command=self.args.command, argv=self.argv, cwd=os.getcwd(), config=cfg,
            config_hash=config_hash(cfg), seeds=seeds,
            inputs=[{"path": p, "sha256": sha256_file(p)} for p in self.inputs],
            outputs=[{"path": p, "sha256": sha256_file(p)} for p in self.outputs],
            wall_time_s=round(time.perf_counter() - self.t0, 6))
        m.write(self.out / f"{self.args.name}.manifest.json")
        return m


# --- helpers -------------------------------------------------------------------------

def _ints(text: str) -> tuple:
    try:
        vals = tuple(int(t) for t in str(text).split(",") if t.strip())
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals or min(vals) <= 0:
        raise UsageError(f"expected positive integers, got {text!r}")
    return vals


def _names(text: str, allowed=None) -> list[str]:
    vals = [t.strip() for t in str(text).split(",") if t.strip()]
    if allowed is not None:
        bad = [v for v in vals if v not in allowed]
        if bad:
            raise UsageError(f"unknown names {bad}; choose from {list(allowed)}")
    if not vals:
        raise UsageError("empty name list")
    return vals


def _grid(args):
    return frequency_grid() if args.grid is None else parse_grid(args.grid)


def _read_netlist(run: Run, path) -> nl.Netlist:
    p = run.input(path)
    return nl.parse(p.read_text(), name=p.stem)


def _dump(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _tcfg(args) -> sg.TrainConfig:
    return sg.TrainConfig(learning_rate=args.lr, max_epochs=args.max_epochs,
                          patience=args.patience, batch_size=args.batch_size, seed=args.seed)


def _load_dataset(path):
    with open(path) as fh:
        first = fh.readline()
    try:
        kind = json.loads(first[1:]).get("kind") if first.startswith("#") else None
    except json.JSONDecodeError:
        kind = None
    if kind == "sub":
        return ds.SubDataset.load(path)
    if kind == "main":
        return ds.MainDataset.load(path)
    raise ds.DatasetError(f"{path}: not a dataset file (missing JSON header line)")


def _write_predictions(path, names, pred, truth):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{c}_{n}" for n in names for c in ("true", "pred")])
        for t, p in zip(truth, pred):
            w.writerow([repr(float(v)) for pair in zip(t, p) for v in pair])


# --- commands ---------------------------------------------------------------------------

def cmd_simulate(args, run: Run):
    net = _read_netlist(run, args.netlist)
    values = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k] = {"on": 1.0, "off": 0.0}.get(v.lower(), None)
        if values[k] is None:
            values[k] = nl.parse_value(v)
    if values:
        net = net.with_values(values)
    sw = sweep_poi(net.subcircuit(), _grid(args), args.z0)
    write_sweep_csv(run.output(f"{args.name}.csv"), sw)
    write_s2p(run.output(f"{args.name}.s2p"), sw.frequencies, sw.sparams, args.z0)
    print(f"{len(sw.frequencies)} points; max power gain at {sw.max_power_gain_frequency!r} Hz")
    return {}


def cmd_gen_data(args, run: Run):
    nets = [_read_netlist(run, p) for p in args.netlist]
    kind = args.kind
    if kind == "auto":
        single = len(nets) == 1 and (args.label or len(nl.partition(nets[0]).labels) <= 1)
        kind = "sub" if single else "main"
    cfg = ds.SamplerConfig(seed=args.seed, count=args.count, strategy=args.strategy,
                           s_source=args.source)
    if kind == "sub":
        if len(nets) != 1:
            raise UsageError("a sub dataset comes from exactly one netlist")
        data = ds.gen_sub_dataset(nets[0], args.label, cfg, args.freq, args.z0, args.encoding)
    else:
        data = ds.gen_main_dataset(nets, cfg, args.freq, args.z0, args.encoding)
    data.save(run.output(f"{args.name}.csv"))
    print(f"{kind} dataset: {len(data)} rows, encoding {data.encoding}")
    return {"sampler": args.seed}


def _save_training(run, args, model, hist, r2, names):
    sg.save_model(model, run.output(f"{args.name}.json"))
    run.output(f"{args.name}.history.csv").write_text(hist.to_csv())
    metrics = {"best_epoch": hist.best_epoch, "best_val_loss": hist.best_val,
               "epochs": len(hist.epochs), "stopped_early": hist.stopped_early,
               "test_r2": dict(zip(names, r2))}
    _dump(run.output(f"{args.name}.metrics.json"), metrics)
    for n, v in zip(names, r2):
        print(f"R2 {n} {v:.4f}")


def cmd_train_sub(args, run: Run):
    data = ds.SubDataset.load(run.input(args.data))
    mcfg = pl.ModelConfig(sub_hidden=_ints(args.hidden))
    model, hist, r2 = pl.fit_sub(data, mcfg, _tcfg(args), split_seed=args.seed)
    _save_training(run, args, model, hist, r2, ds.s_feature_names(data.encoding))
    return {"init": args.seed, "split": args.seed}


def cmd_train_main(args, run: Run):
    data = ds.MainDataset.load(run.input(args.data))
    pois = _names(args.pois, POI_NAMES)
    mcfg = pl.ModelConfig(main_hidden=_ints(args.hidden), latent=args.latent,
                          chunk_hidden=_ints(args.chunk_hidden))
    model, hist, r2 = pl.fit_main(data, pois, args.arch, mcfg, _tcfg(args), split_seed=args.seed)
    _save_training(run, args, model, hist, r2, pois)
    return {"init": args.seed, "split": args.seed}


def _check_frequency(model_meta, data):
    mf = model_meta.get("frequency")
    if mf is not None and not math.isclose(mf, data.frequency, rel_tol=1e-9):
        raise ds.DatasetError(f"model was trained at {mf} Hz, dataset is at {data.frequency} Hz")


def cmd_eval(args, run: Run):
    model = sg.load_model(run.input(args.model))
    data = _load_dataset(run.input(args.data))
    subs = [sg.load_model(run.input(p)) for p in args.subs or []]
    if isinstance(data, ds.SubDataset):
        if model.meta.get("role") != "sub":
            raise ds.DatasetError("a sub dataset needs a sub-model")
        if model.meta.get("topology_key") != data.topology_key:
            raise ds.DatasetError("sub-model and dataset describe different E-network topologies")
        _check_frequency(model.meta, data)
        truth, pred = data.targets(), model.forward(data.features())
        names = ds.s_feature_names(data.encoding)
    else:
        if isinstance(model, sg.ComposedModel):
            net = nl.parse(model.meta["netlist"])
            _check_frequency(model.main.meta, data)
            key = nl.circuit_key(net)
            idx = [i for i, t in enumerate(data.topology) if t == key]
            if not idx:
                raise ds.DatasetError("dataset has no rows of the composed model's topology")
            data = data.subset(idx)
            names = model.main.meta["pois"]
            pred = pl.predict_instances(model, net, data.params)
        else:
            if model.meta.get("role") != "main":
                raise ds.DatasetError("a main dataset needs a main or composed model")
            _check_frequency(model.meta, data)
            if model.meta.get("encoding") != data.encoding:
                raise ds.DatasetError(f"model expects {model.meta.get('encoding')} S-parameters, "
                                      f"dataset has {data.encoding}")
            names = model.meta["pois"]
            if subs:
                pred = pl.predict_dataset(data, pl.library(subs), model)
            else:
                feats = data.features()
                if feats.shape[1] != model.n_in:
                    raise ds.DatasetError(f"model takes {model.n_in} inputs, "
                                          f"dataset rows have {feats.shape[1]}")
                pred = model.forward(feats)
        truth = data.targets(names)
    r2 = sg.r2_columns(pred, truth)
    _dump(run.output(f"{args.name}.metrics.json"), {"count": len(truth), "r2": dict(zip(names, r2))})
    _write_predictions(run.output(f"{args.name}.predictions.csv"), names, pred, truth)
    for n, v in zip(names, r2):
        print(f"R2 {n} {v:.4f}")
    return {}


def cmd_compose(args, run: Run):
    net = _read_netlist(run, args.netlist)
    subs = [sg.load_model(run.input(p)) for p in args.subs]
    main = sg.load_model(run.input(args.main))
    cm = pl.compose_for(net, pl.library(subs), main)
    sg.save_model(cm, run.output(f"{args.name}.json"))
    print(f"composed {len(cm.subs)} sub-models with a {main.kind} main model")
    return {}


def _load_problem(run: Run, args):
    path = run.input(args.problem)
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    base = path.parent
    net = _read_netlist(run, base / spec["netlist"])
    targets = op.targets_from_json(spec["targets"])
    sim_kind = spec.get("simulator", "surrogate")
    if sim_kind == "oracle":
        sim = op.OracleSimulator(args.z0)
    elif sim_kind == "surrogate":
        subs = [sg.load_model(run.input(base / p)) for p in spec.get("sub_models", [])]
        mains = [sg.load_model(run.input(base / p)) for p in spec.get("main_models", [])]
        if not mains:
            raise UsageError("a surrogate problem needs main_models")
        sim = op.SurrogateSimulator(subs, mains)
    else:
        raise UsageError(f"simulator must be surrogate or oracle, got {sim_kind!r}")
    ranges = {k: tuple(v) for k, v in spec.get("ranges", {}).items()}
    opt = dict(spec.get("optimizer", {}))
    opt.setdefault("seed", args.seed)
    return op.SizingProblem(net, targets, sim, ranges or None), op.config_from_json(opt), \
        spec.get("verify", True)


def cmd_size(args, run: Run):
    problem, cfg, do_verify = _load_problem(run, args)
    result = op.evolve(problem, cfg)
    chosen, reports = None, []
    oracle = op.OracleSimulator(args.z0)
    if do_verify:
        chosen, reports = op.verify_front(result, problem, oracle)
    out = op.result_json(result, problem, chosen, reports)
    out["oracle_calls"] = oracle.calls
    run.output(f"{args.name}.result.json").write_text(op.dumps(out))
    op.write_history_csv(run.output(f"{args.name}.history.csv"), result.history)
    print(f"{result.evaluations} evaluations, pareto front of {len(result.front)}")
    if chosen is not None:
        print(f"verified: {chosen.status}")
        for c in chosen.checks:
            print(f"  {c.poi} @ {c.frequency:g} Hz {c.goal} {c.value:g}: "
                  f"predicted {c.predicted:.3f}, oracle {c.verified:.3f}")
    return {"optimizer": cfg.seed}


def cmd_compare(args, run: Run):
    family = [_read_netlist(run, p) for p in args.netlist] if args.netlist else None
    cfg = cmp.CompareConfig(
        frequency=args.freq, z0=args.z0, pois=tuple(_names(args.pois, POI_NAMES)),
        target_r2=args.target_r2, test_count=args.test_count, test_seed=args.test_seed,
        raw_ladder=_ints(args.raw_ladder), sub_ladder=_ints(args.sub_ladder),
        main_ladder=_ints(args.main_ladder),
        methods=tuple(_names(args.methods, cmp.METHODS)), seed=args.seed,
        max_epochs=args.max_epochs, patience=args.patience)
    results = cmp.run_compare(family, cfg)
    cmp.write_table(run.output(f"{args.name}.csv"), results, cfg.pois)
    for r in results:
        status = "reached" if r.reached else "missed"
        print(f"{r.method:<11} {status:<8} {r.oracle_calls:>6} oracle calls  ({r.detail})")
    return {"compare": args.seed, "test": args.test_seed}


def cmd_replay(args):
    m = RunManifest.read(args.manifest)
    argv = list(m.argv)
    target = args.into or tempfile.mkdtemp(prefix="replay-")
    target = os.path.abspath(target)
    if "--out" in argv:
        argv[argv.index("--out") + 1] = target
    else:
        argv += ["--out", target]
    old = os.getcwd()
    os.chdir(m.cwd)
    try:
        code = main(argv)
    finally:
        os.chdir(old)
    if code != EXIT_OK:
        print(f"replay failed with exit code {code}", file=sys.stderr)
        return code
    same = True
    for o in m.outputs:
        rel = Path(o["path"]).name
        fresh = Path(target) / rel
        ok = fresh.is_file() and sha256_file(fresh) == o["sha256"]
        same &= ok
        print(f"{'identical' if ok else 'DIFFERENT'} {rel}")
    return EXIT_OK if same else EXIT_DOMAIN


# --- parser -------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    g.add_argument("--z0", type=float, default=50.0, help="reference impedance in ohm")
    g.add_argument("--grid", default=None, help="frequency grid lo:hi:points[:log|lin]")
    g.add_argument("--out", default=".", help="output directory")
    g.add_argument("--config", default=None, help="JSON file of option defaults")
    g.add_argument("--name", default=None, help="stem of the output files")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _training(p):
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--max-epochs", type=int, default=5000)
    p.add_argument("--patience", type=int, default=125)
    p.add_argument("--batch-size", type=int, default=32, help="0 means full batch")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="enetmodel", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_common()]

    p = sub.add_parser("simulate", parents=common, help="S-parameter and PoI sweep of a netlist")
    p.add_argument("netlist")
    p.add_argument("--set", action="append", metavar="NAME=VALUE", help="override a value")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-data", parents=common, help="sample a sub or main dataset")
    p.add_argument("--netlist", action="append", required=True, help="repeat for a family")
    p.add_argument("--count", type=int, default=400)
    p.add_argument("--freq", type=float, default=2e9)
    p.add_argument("--kind", choices=("auto", "sub", "main"), default="auto")
    p.add_argument("--label", default=None, help="E-network label for a sub dataset")
    p.add_argument("--strategy", choices=("declared", "uniform", "log-uniform"), default="declared")
    p.add_argument("--source", choices=("from-topologies", "synthetic-passive"),
                   default="from-topologies")
    p.add_argument("--encoding", choices=tuple(ds.ENCODINGS), default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-sub", parents=common, help="train a sub-model")
    p.add_argument("data")
    p.add_argument("--hidden", default="32,32")
    _training(p)
    p.set_defaults(func=cmd_train_sub)

    p = sub.add_parser("train-main", parents=common, help="train a main model")
    p.add_argument("data")
    p.add_argument("--pois", default=DEFAULT_POIS)
    p.add_argument("--arch", choices=pl.MAIN_ARCHS, default="cci")
    p.add_argument("--hidden", default="32,32,32", help="FC hidden layers")
    p.add_argument("--latent", type=int, default=8, help="CCI latent width")
    p.add_argument("--chunk-hidden", default="32,32", help="CCI chunk hidden layers")
    _training(p)
    p.set_defaults(func=cmd_train_main)

    p = sub.add_parser("eval", parents=common, help="R2 of a model on a dataset")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--subs", nargs="*", help="sub-models for end-to-end evaluation")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compose", parents=common, help="bundle sub-models and a main model")
    p.add_argument("--netlist", required=True)
    p.add_argument("--subs", nargs="+", required=True)
    p.add_argument("--main", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("size", parents=common, help="NSGA-II sizing from a problem file")
    p.add_argument("problem")
    p.set_defaults(func=cmd_size)

    p = sub.add_parser("compare", parents=common, help="training data needed per method")
    p.add_argument("--netlist", action="append", help="family members (default: built-in)")
    p.add_argument("--freq", type=float, default=2e9)
    p.add_argument("--pois", default=DEFAULT_POIS)
    p.add_argument("--target-r2", type=float, default=0.90)
    p.add_argument("--test-count", type=int, default=200)
    p.add_argument("--test-seed", type=int, default=1000)
    p.add_argument("--raw-ladder", default="50,100,200,400,800")
    p.add_argument("--sub-ladder", default="100,200,400")
    p.add_argument("--main-ladder", default="250,500,1000,2000")
    p.add_argument("--methods", default=",".join(cmp.METHODS))
    p.add_argument("--max-epochs", type=int, default=3000)
    p.add_argument("--patience", type=int, default=125)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replay", help="re-run a manifest and compare outputs byte for byte")
    p.add_argument("manifest")
    p.add_argument("--into", default=None, help="directory for the fresh outputs")
    p.set_defaults(func=None)
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            overrides = json.load(fh)
        if not isinstance(overrides, dict):
            raise UsageError("--config must hold a JSON object")
        known = set(vars(args))
        bad = sorted(k for k in overrides if k.replace("-", "_") not in known)
        if bad:
            raise UsageError(f"unknown keys in {args.config}: {bad}")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        subparser.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except (UsageError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return cmd_replay(args)
        if args.name is None:
            args.name = args.command
        run = Run(args, argv)
        seeds = args.func(args, run)
        run.finish(seeds or {})
        return EXIT_OK
    except (TwoPortError, sg.TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (UsageError, OSError, nl.NetlistError, ds.DatasetError, sg.EncodingMismatch,
            op.SizingError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Training-data requirements of four surrogate strategies on a topology family.

Methods:

* ``fc_raw``      one dense model per topology on raw design parameters
* ``cci_raw``     one CCI model per topology on raw parameters, chunked per E-network
* ``enet_fc``   shared sub-models plus one dense main model for the family
* ``enet_cci``  shared sub-models plus one CCI main model for the family

Each method walks its sample-size ladder from small to large and stops at
the first size whose held-out R2 reaches the target for every PoI.  All
methods are scored on the same multi-topology test set, end to end from
raw parameters.  One oracle call is one solved dataset row.
"""

from __future__ import annotations

import csv
import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import circuits
from . import dataset as ds
from . import netlist as nl
from . import pipeline as pl
from . import surrogate as sg
from .poi import POI_NAMES

log = logging.getLogger(__name__)

METHODS = ("fc_raw", "cci_raw", "enet_fc", "enet_cci")


@dataclass(frozen=True)
class CompareConfig:
    frequency: float = 2e9
    z0: float = 50.0
    pois: tuple = ("insertion_phase_deg", "input_return_loss_db")
    target_r2: float = 0.90
    test_count: int = 200
    test_seed: int = 1000
    raw_ladder: tuple = (50, 100, 200, 400, 800)     # rows per topology
    sub_ladder: tuple = (100, 200, 400)              # rows per E-network variant
    main_ladder: tuple = (250, 500, 1000, 2000)      # rows for the whole family
    methods: tuple = METHODS
    seed: int = 0
    max_epochs: int = 3000
    patience: int = 125
    model: pl.ModelConfig = field(default_factory=pl.ModelConfig)

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        for name in ("raw_ladder", "sub_ladder", "main_ladder"):
            ladder = getattr(self, name)
            if not ladder or list(ladder) != sorted(set(ladder)) or ladder[0] < 10:
                raise ValueError(f"{name} must be strictly increasing and start at >= 10")
        unknown = [p for p in self.pois if p not in POI_NAMES]
        if unknown:
            raise ValueError(f"unknown PoIs {unknown}")


@dataclass
class MethodResult:
    method: str
    reached: bool
    oracle_calls: int
    r2: list
    detail: str
    seconds: float


def _tcfg(cfg: CompareConfig, salt: int) -> sg.TrainConfig:
    return sg.TrainConfig(max_epochs=cfg.max_epochs, patience=cfg.patience, seed=cfg.seed + salt)


def _score(pred, truth) -> list[float]:
    return sg.r2_columns(pred, truth)


def _reached(r2, target) -> bool:
    return all(np.isfinite(r2)) and min(r2) >= target


# --- raw-parameter baselines -------------------------------------------------

def raw_rows(net: nl.Netlist, count: int, seed: int, f: float, z0: float, pois):
    """(X, Y) of one topology sampled on raw parameters."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    while len(xs) < count:
        values = ds.sample_instance(net, rng)
        _, _, poi = ds.oracle_row(net, values, f, z0)
        xs.append(pl.raw_features(net, values))
        ys.append([poi[p] for p in pois])
    return np.array(xs, dtype=float), np.array(ys, dtype=float)


def _fit_raw(arch, net, x, y, cfg: CompareConfig, salt: int):
    groups, rest, mask = pl.raw_layout(net)
    if arch == "fc":
        m = sg.Mlp.build(x.shape[1], cfg.model.main_hidden, y.shape[1], seed=cfg.seed + salt,
                         log_mask=mask)
    else:
        m = sg.CciModel.build(groups, rest, y.shape[1], chunk_hidden=cfg.model.chunk_hidden,
                              latent=cfg.model.latent, seed=cfg.seed + salt, log_mask=mask,
                              shared_cols=rest)
    rng = np.random.default_rng(cfg.seed + salt)
    order = rng.permutation(len(x))
    n_val = max(1, int(round(cfg.model.val_frac * len(x))))
    va, tr = order[:n_val], order[n_val:]
    m, _ = sg.train(m, x[tr], y[tr], x[va], y[va], _tcfg(cfg, salt))
    return m


def run_raw(arch: str, family, test: ds.MainDataset, cfg: CompareConfig) -> MethodResult:
    t0 = time.perf_counter()
    keys = [nl.circuit_key(n) for n in family]
    truth = test.targets(cfg.pois)
    top = cfg.raw_ladder[-1]
    pools = [raw_rows(n, top, cfg.seed + 7919 * (t + 1), cfg.frequency, cfg.z0, cfg.pois)
             for t, n in enumerate(family)]
    r2 = [float("nan")] * len(cfg.pois)
    for n in cfg.raw_ladder:
        pred = np.full(truth.shape, np.nan)
        for t, (net, key) in enumerate(zip(family, keys)):
            x, y = pools[t]
            m = _fit_raw(arch, net, x[:n], y[:n], cfg, salt=t)
            idx = [i for i, k in enumerate(test.topology) if k == key]
            if idx:
                feats = np.array([pl.raw_features(net, test.params[i]) for i in idx])
                pred[idx] = m.forward(feats)
        r2 = _score(pred, truth)
        log.info("%s_raw n=%d per topology: R2=%s", arch, n, r2)
        if _reached(r2, cfg.target_r2):
            return MethodResult(f"{arch}_raw", True, n * len(family), r2,
                                f"{n} per topology", time.perf_counter() - t0)
    return MethodResult(f"{arch}_raw", False, top * len(family), r2,
                        f"target missed at {top} per topology", time.perf_counter() - t0)


# --- E-network ---------------------------------------------------------------------

def variant_netlists(family) -> list[nl.Netlist]:
    """One stand-alone netlist per distinct E-network topology of the family."""
    seen: dict = {}
    for net in family:
        part = nl.partition(net)
        for label, sub in zip(part.labels, part.enetworks):
            key = nl.topology_key(sub)
            if key not in seen:
                seen[key] = nl.extract(net, label, f"variant{len(seen)}")
    return list(seen.values())


def run_enet(arch: str, family, test: ds.MainDataset, cfg: CompareConfig) -> MethodResult:
    t0 = time.perf_counter()
    truth = test.targets(cfg.pois)
    variants = variant_netlists(family)
    sub_pool = [ds.gen_sub_dataset(v, None, ds.SamplerConfig(seed=cfg.seed + 31 * (k + 1),
                                                            count=cfg.sub_ladder[-1]),
                                   cfg.frequency, cfg.z0) for k, v in enumerate(variants)]
    main_pool = ds.gen_main_dataset(family, ds.SamplerConfig(seed=cfg.seed + 17,
                                                            count=cfg.main_ladder[-1]),
                                    cfg.frequency, cfg.z0)
    subs_at: dict = {}
    main_at: dict = {}

    def subs(n):
        if n not in subs_at:
            subs_at[n] = pl.library(
                pl.fit_sub(d.subset(range(n)), cfg.model, _tcfg(cfg, 100 + k))[0]
                for k, d in enumerate(sub_pool))
        return subs_at[n]

    def main(n):
        if n not in main_at:
            main_at[n] = pl.fit_main(main_pool.subset(range(n)), cfg.pois, arch, cfg.model,
                                     _tcfg(cfg, 200), holdout=False)[0]
        return main_at[n]

    combos = sorted(itertools.product(cfg.sub_ladder, cfg.main_ladder),
                    key=lambda c: (len(variants) * c[0] + c[1], c))
    r2 = [float("nan")] * len(cfg.pois)
    for n_sub, n_main in combos:
        calls = len(variants) * n_sub + n_main
        r2 = _score(pl.predict_dataset(test, subs(n_sub), main(n_main)), truth)
        log.info("enet_%s sub=%d main=%d calls=%d: R2=%s", arch, n_sub, n_main, calls, r2)
        if _reached(r2, cfg.target_r2):
            return MethodResult(f"enet_{arch}", True, calls, r2,
                                f"{n_sub} per variant x {len(variants)} + {n_main} main",
                                time.perf_counter() - t0)
    calls = len(variants) * cfg.sub_ladder[-1] + cfg.main_ladder[-1]
    return MethodResult(f"enet_{arch}", False, calls, r2, "target missed at the largest sizes",
                        time.perf_counter() - t0)


def run_compare(family=None, cfg: CompareConfig = CompareConfig()) -> list[MethodResult]:
    family = family if family is not None else circuits.phase_shifter_family()
    test = ds.gen_main_dataset(family, ds.SamplerConfig(seed=cfg.test_seed, count=cfg.test_count),
                               cfg.frequency, cfg.z0)
    out = []
    for m in cfg.methods:
        arch = "fc" if m.startswith("fc") or m.endswith("_fc") else "cci"
        runner = run_raw if m.endswith("_raw") else run_enet
        out.append(runner(arch, family, test, cfg))
    return out


def write_table(path, results, pois):
    """One row per method.  Timings stay out so reruns are byte-identical."""
    cols = ["method", "reached", "oracle_calls", "detail"] + [f"r2_{p}" for p in pois]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in results:
            w.writerow([r.method, int(r.reached), r.oracle_calls, r.detail]
                       + [repr(float(v)) for v in r.r2])

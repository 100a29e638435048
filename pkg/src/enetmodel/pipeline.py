"""Glue between datasets, models and netlists.

Sub-models are looked up by E-network topology key, so one trained
sub-model serves a variant in any slot of any topology of a family.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dataset as ds
from . import netlist as nl
from . import surrogate as sg
from .twoport import ElementKind

MAIN_ARCHS = ("fc", "cci")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture choices shared by the CLI, compare and sizing."""
    sub_hidden: tuple = (32, 32)
    main_hidden: tuple = (32, 32, 32)
    latent: int = 8
    chunk_hidden: tuple = (32, 32)
    val_frac: float = 0.10
    test_frac: float = 0.10


def fit_sub(data: ds.SubDataset, mcfg: ModelConfig = ModelConfig(),
            tcfg: sg.TrainConfig = sg.TrainConfig(), split_seed: int = 0):
    """Train a sub-model; returns (model, history, held-out R2 per output)."""
    tr, va, te = ds.split(data, mcfg.val_frac, mcfg.test_frac, seed=split_seed)
    m = sg.Mlp.build(len(data.param_names), mcfg.sub_hidden, ds.ENCODINGS[data.encoding],
                     seed=tcfg.seed, log_mask=data.log_params,
                     meta={"role": "sub", "topology_key": data.topology_key,
                           "param_names": list(data.param_names), "encoding": data.encoding,
                           "frequency": data.frequency, "z0": data.z0, "label": data.label})
    m, hist = sg.train(m, tr.features(), tr.targets(), va.features(), va.targets(), tcfg)
    r2 = sg.r2_columns(m.forward(te.features()), te.targets())
    m.meta["test_r2"] = r2
    return m, hist, r2


def build_main(arch: str, n_enetworks: int, s_width: int, n_residual: int, n_out: int,
               mcfg: ModelConfig = ModelConfig(), seed: int = 0, meta=None):
    """Main model over [s_1 .. s_N, x_R].  CCI chunks also see x_R."""
    n_in = n_enetworks * s_width + n_residual
    res_cols = list(range(n_enetworks * s_width, n_in))
    if arch == "fc":
        return sg.Mlp.build(n_in, mcfg.main_hidden, n_out, seed=seed, meta=meta)
    if arch == "cci":
        if n_enetworks == 0:
            raise ValueError("a CCI model needs at least one E-network")
        groups = [list(range(j * s_width, (j + 1) * s_width)) for j in range(n_enetworks)]
        return sg.CciModel.build(groups, res_cols, n_out, chunk_hidden=mcfg.chunk_hidden,
                                 latent=mcfg.latent, seed=seed, meta=meta, shared_cols=res_cols)
    raise ValueError(f"unknown architecture {arch!r}; choose from {MAIN_ARCHS}")


def fit_main(data: ds.MainDataset, pois: Sequence[str], arch: str = "cci",
             mcfg: ModelConfig = ModelConfig(), tcfg: sg.TrainConfig = sg.TrainConfig(),
             split_seed: int = 0, holdout: bool = True):
    """Train a main model.  With ``holdout`` 10% is kept back for testing.

    Returns (model, history, held-out R2 per PoI or None).
    """
    pois = list(pois)
    tr, va, te = ds.split(data, mcfg.val_frac, mcfg.test_frac if holdout else 0.0,
                          seed=split_seed)
    meta = {"role": "main", "pois": pois, "encoding": data.encoding,
            "n_enetworks": data.n_enetworks, "residual_names": list(data.residual_names),
            "frequency": data.frequency, "z0": data.z0, "arch": arch}
    m = build_main(arch, data.n_enetworks, data.s_width, len(data.residual_names), len(pois),
                   mcfg, tcfg.seed, meta)
    m, hist = sg.train(m, tr.features(), tr.targets(pois), va.features(), va.targets(pois), tcfg)
    r2 = None
    if holdout:
        r2 = sg.r2_columns(m.forward(te.features()), te.targets(pois))
        m.meta["test_r2"] = r2
    return m, hist, r2


# --- composition per netlist instance -------------------------------------------

def library(subs) -> dict:
    """topology key -> sub-model."""
    lib = {}
    for s in subs:
        key = s.meta.get("topology_key")
        if key is None:
            raise ValueError("sub-model has no topology_key in its metadata")
        lib[key] = s
    return lib


def compose_for(net: nl.Netlist, lib: dict, main) -> sg.ComposedModel:
    part = nl.partition(net)
    subs = []
    for label, sub in zip(part.labels, part.enetworks):
        key = nl.topology_key(sub)
        if key not in lib:
            raise sg.EncodingMismatch(f"no sub-model for E-network {label!r} ({key})")
        subs.append(lib[key])
    enc = main.meta.get("encoding", "reciprocal")
    return sg.compose(subs, main, enc, len(part.residual_names),
                      meta={"netlist": nl.render(net), "labels": list(part.labels)})


def instance_inputs(net: nl.Netlist, values: dict) -> tuple[list[np.ndarray], np.ndarray]:
    """(x_1..x_N, x_R) of one sized instance.

    x_j lists the E-network's sizable values in declaration order, which is
    the sub-model's parameter order because the topology keys agree.
    """
    inst = net.with_values(values)
    part = nl.partition(inst)
    sized = {p.name for p in nl.enumerate_parameters(net)}
    xs = [np.array([e.value for e in sub.elements if e.name in sized], dtype=float)
          for sub in part.enetworks]
    return xs, np.array(ds.residual_vector(part, inst), dtype=float)


def predict_instances(cm: sg.ComposedModel, net: nl.Netlist, rows: Sequence[dict]) -> np.ndarray:
    """Composed predictions for many sizings of one topology."""
    if not rows:
        return np.zeros((0, cm.main.n_out))
    pieces = [instance_inputs(net, v) for v in rows]
    xs = [np.stack([p[0][j] for p in pieces]) for j in range(len(cm.subs))]
    x_r = np.stack([p[1] for p in pieces]).reshape(len(rows), -1)
    return sg.predict_composed(cm, xs, x_r)


def predict_dataset(data: ds.MainDataset, lib: dict, main) -> np.ndarray:
    """End-to-end composed predictions for every row of a from-topologies set."""
    out = np.full((len(data), main.n_out), np.nan)
    by_topo: dict = {}
    for i, t in enumerate(data.topology):
        by_topo.setdefault(t, []).append(i)
    for key, idx in by_topo.items():
        if key not in data.topologies:
            raise ds.DatasetError(f"row topology {key!r} has no netlist; need from-topologies data")
        net = nl.parse(data.topologies[key])
        cm = compose_for(net, lib, main)
        out[idx] = predict_instances(cm, net, [data.params[i] for i in idx])
    return out


def master_switches(net: nl.Netlist) -> list[str]:
    return [e.name for e in net.elements
            if e.kind is ElementKind.SWITCH and e.name not in net.links]


def raw_features(net: nl.Netlist, values: dict) -> list[float]:
    """Raw design vector: sizable parameters then independent switch states."""
    names = [p.name for p in nl.enumerate_parameters(net)] + master_switches(net)
    return [float(values[n]) for n in names]


def raw_layout(net: nl.Netlist) -> tuple[list[list[int]], list[int], list[bool]]:
    """Column groups per E-network, residual columns and log mask of raw_features."""
    params = nl.enumerate_parameters(net)
    labels = nl.partition(net).labels
    groups = [[k for k, p in enumerate(params) if p.owner == lab] for lab in labels]
    rest = [k for k, p in enumerate(params) if p.owner == "residual"]
    n_sw = len(master_switches(net))
    rest += list(range(len(params), len(params) + n_sw))
    mask = [p.scale == "log" for p in params] + [False] * n_sw
    return groups, rest, mask

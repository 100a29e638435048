"""Training data for sub-models (parameters -> S) and the main model (S -> PoI).

Everything is generated with the MNA oracle at a single frequency.  Files
are CSV with a leading ``# {json}`` header line carrying the schema, seed,
S-parameter encoding and topology keys, so a model can refuse data it was
not trained for.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import netlist as nl
from .poi import DB_FLOOR, POI_NAMES, PoiVector, encode_number, poi_from_s
from .twoport import ElementKind, SMatrix, TwoPortError, mna_two_port

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ENCODINGS = {"full": 8, "reciprocal": 6, "symmetric": 4}
S_COLUMNS = ["s11_re", "s11_im", "s12_re", "s12_im", "s21_re", "s21_im", "s22_re", "s22_im"]
PASSIVE_KINDS = {ElementKind.RESISTOR, ElementKind.INDUCTOR, ElementKind.CAPACITOR,
                 ElementKind.SWITCH, ElementKind.SHORT, ElementKind.OPEN}


class DatasetError(Exception):
    pass


def encode_s(s: SMatrix, encoding: str = "full") -> list[float]:
    """Real feature vector of an S-matrix.

    ``reciprocal`` keeps s11, s21, s22 (s12 = s21); ``symmetric`` keeps
    s11, s21 (additionally s22 = s11).
    """
    if encoding == "full":
        vals = (s.s11, s.s12, s.s21, s.s22)
    elif encoding == "reciprocal":
        vals = (s.s11, s.s21, s.s22)
    elif encoding == "symmetric":
        vals = (s.s11, s.s21)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    out = []
    for v in vals:
        out += [v.real, v.imag]
    return out


_KEPT = {"full": ("s11", "s12", "s21", "s22"), "reciprocal": ("s11", "s21", "s22"),
         "symmetric": ("s11", "s21")}


def s_feature_names(encoding: str, prefix: str = "") -> list[str]:
    """Column names matching encode_s."""
    return [f"{prefix}{q}_{c}" for q in _KEPT[encoding] for c in ("re", "im")]


def decode_s(vec: Sequence[float], encoding: str = "full") -> SMatrix:
    c = [complex(vec[2 * k], vec[2 * k + 1]) for k in range(len(vec) // 2)]
    if encoding == "full":
        return SMatrix(*c)
    if encoding == "reciprocal":
        return SMatrix(c[0], c[1], c[1], c[2])
    if encoding == "symmetric":
        return SMatrix(c[0], c[1], c[1], c[0])
    raise ValueError(f"unknown encoding {encoding!r}")


def default_encoding(elements) -> str:
    return "reciprocal" if all(e.kind in PASSIVE_KINDS for e in elements) else "full"


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    count: int = 400
    strategy: str = "declared"   # declared: each parameter's own scale; uniform / log-uniform: forced
    s_source: str = "from-topologies"

    def __post_init__(self):
        if self.count <= 0:
            raise DatasetError("count must be positive")
        if self.strategy not in ("declared", "uniform", "log-uniform"):
            raise DatasetError(f"unknown strategy {self.strategy!r}")
        if self.s_source not in ("from-topologies", "synthetic-passive"):
            raise DatasetError(f"unknown s_source {self.s_source!r}")


def _draw(p: nl.DesignParameter, rng: np.random.Generator, strategy: str) -> float:
    u = rng.random()
    if strategy == "declared":
        return p.decode(u)
    if strategy == "log-uniform":
        return math.exp(math.log(p.lo) + u * (math.log(p.hi) - math.log(p.lo)))
    return p.lo + u * (p.hi - p.lo)


def _write(path, header: dict, columns: list[str], rows: list[list[str]]):
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _read(path) -> tuple[dict, list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise DatasetError(f"{path}: missing JSON header line")
        header = json.loads(first[2:])
        r = csv.reader(fh)
        columns = next(r)
        rows = list(r)
    if header.get("schema") != SCHEMA_VERSION:
        raise DatasetError(f"{path}: unsupported schema {header.get('schema')!r}")
    return header, columns, rows


def _num(tok: str) -> float:
    return float(tok)


def _s_cells(s: SMatrix) -> list[str]:
    out = []
    for v in (s.s11, s.s12, s.s21, s.s22):
        out += [repr(v.real), repr(v.imag)]
    return out


def _s_from_cells(cells) -> SMatrix:
    v = [float(c) for c in cells]
    return SMatrix(complex(v[0], v[1]), complex(v[2], v[3]),
                   complex(v[4], v[5]), complex(v[6], v[7]))


# --- sub datasets -----------------------------------------------------------

@dataclass
class SubDataset:
    topology_key: str
    frequency: float
    z0: float
    encoding: str
    param_names: list[str]
    log_params: list[bool]
    x: np.ndarray                 # (n, p) raw parameter values
    s: list[SMatrix]
    seed: int = 0
    label: str = ""
    netlist_text: str = ""

    def __len__(self):
        return len(self.s)

    def features(self) -> np.ndarray:
        return np.asarray(self.x, dtype=float)

    def targets(self) -> np.ndarray:
        return np.array([encode_s(s, self.encoding) for s in self.s], dtype=float)

    def strata(self):
        return None

    def subset(self, idx) -> "SubDataset":
        idx = list(idx)
        return SubDataset(self.topology_key, self.frequency, self.z0, self.encoding,
                          list(self.param_names), list(self.log_params), self.x[idx],
                          [self.s[i] for i in idx], self.seed, self.label, self.netlist_text)

    def header(self) -> dict:
        return {"schema": SCHEMA_VERSION, "kind": "sub", "topology_key": self.topology_key,
                "frequency": self.frequency, "z0": self.z0, "encoding": self.encoding,
                "param_names": self.param_names, "log_params": self.log_params,
                "seed": self.seed, "label": self.label, "count": len(self),
                "netlist": self.netlist_text}

    def save(self, path):
        rows = [[repr(float(v)) for v in xr] + _s_cells(s) for xr, s in zip(self.x, self.s)]
        _write(path, self.header(), list(self.param_names) + S_COLUMNS, rows)

    @classmethod
    def load(cls, path) -> "SubDataset":
        h, cols, rows = _read(path)
        if h.get("kind") != "sub":
            raise DatasetError(f"{path} is not a sub dataset")
        p = len(h["param_names"])
        x = np.array([[float(c) for c in r[:p]] for r in rows], dtype=float).reshape(len(rows), p)
        s = [_s_from_cells(r[p:p + 8]) for r in rows]
        return cls(h["topology_key"], h["frequency"], h["z0"], h["encoding"], h["param_names"],
                   h["log_params"], x, s, h["seed"], h.get("label", ""), h.get("netlist", ""))


def _solve_with_retries(count, draw, solve, what):
    rows = []
    attempts = 0
    budget = 10 * count
    while len(rows) < count:
        if attempts >= budget:
            raise DatasetError(f"{what}: oracle failed too often ({attempts} attempts)")
        attempts += 1
        sample = draw()
        try:
            rows.append((sample, solve(sample)))
        except TwoPortError as exc:
            log.warning("%s: resampling after solver failure: %s", what, exc)
    return rows


def gen_sub_dataset(net: nl.Netlist, label: str | None, cfg: SamplerConfig, f: float,
                    z0: float = 50.0, encoding: str | None = None) -> SubDataset:
    """Sample one E-network's parameters and solve its S-parameters.

    ``label`` picks the E-network inside ``net``; None means the netlist
    has exactly one E-network (or is itself the E-network, untagged).
    """
    part = nl.partition(net)
    if label is None:
        if len(part.enetworks) == 1:
            label = part.labels[0]
        elif not part.enetworks:
            label = ""
        else:
            raise DatasetError(f"{net.name}: choose one of {list(part.labels)}")
    if label:
        if label not in part.labels:
            raise DatasetError(f"{net.name}: no E-network {label!r}")
        sub = part.enetworks[part.labels.index(label)]
        members = {e.name for e in sub.elements}
    else:
        sub = net.subcircuit()
        members = {e.name for e in net.elements}
    params = [p for p in nl.enumerate_parameters(net) if p.name in members]
    rng = np.random.default_rng(cfg.seed)
    count = cfg.count
    if not params:
        warnings.warn(f"{net.name}/{label}: every element is fixed; emitting one row")
        count = 1

    def draw():
        return [_draw(p, rng, cfg.strategy) for p in params]

    def solve(values):
        named = dict(zip((p.name for p in params), values))
        elems = tuple(e.with_value(named[e.name]) if e.name in named else e for e in sub.elements)
        return mna_two_port(type(sub)(elems, sub.port1, sub.port2, sub.name), f, z0)

    rows = _solve_with_retries(count, draw, solve, f"{net.name}/{label}")
    enc = encoding or default_encoding(sub.elements)
    x = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), len(params))
    return SubDataset(nl.topology_key(sub), float(f), float(z0), enc,
                      [p.name for p in params], [p.scale == "log" for p in params],
                      x, [r[1] for r in rows], cfg.seed, label, nl.render(net))


# --- main datasets ----------------------------------------------------------

@dataclass
class MainDataset:
    frequency: float
    z0: float
    encoding: str
    n_enetworks: int
    residual_names: list[str]
    topology: list[str]            # per row; "synthetic" for synthetic-passive rows
    s: list[list[SMatrix]]          # per row, one S-matrix per E-network
    x_r: np.ndarray                # (n, r)
    y: np.ndarray                  # (n, len(POI_NAMES))
    params: list[dict]             # per row raw design parameters ({} when synthetic)
    topologies: dict = field(default_factory=dict)   # key -> netlist text
    seed: int = 0
    s_source: str = "from-topologies"

    def __len__(self):
        return len(self.s)

    @property
    def s_width(self) -> int:
        return ENCODINGS[self.encoding]

    def feature_names(self) -> list[str]:
        names = []
        for j in range(self.n_enetworks):
            names += s_feature_names(self.encoding, f"e{j + 1}_")
        return names + list(self.residual_names)

    def features(self) -> np.ndarray:
        rows = []
        for ss, xr in zip(self.s, self.x_r):
            feats = []
            for s in ss:
                feats += encode_s(s, self.encoding)
            rows.append(feats + list(xr))
        return np.array(rows, dtype=float).reshape(len(self), -1)

    def targets(self, pois: Sequence[str]) -> np.ndarray:
        idx = [POI_NAMES.index(p) for p in pois]
        return self.y[:, idx]

    def strata(self):
        return list(self.topology)

    def subset(self, idx) -> "MainDataset":
        idx = list(idx)
        return MainDataset(self.frequency, self.z0, self.encoding, self.n_enetworks,
                           list(self.residual_names), [self.topology[i] for i in idx],
                           [self.s[i] for i in idx], self.x_r[idx], self.y[idx],
                           [self.params[i] for i in idx], dict(self.topologies),
                           self.seed, self.s_source)

    def header(self) -> dict:
        return {"schema": SCHEMA_VERSION, "kind": "main", "frequency": self.frequency,
                "z0": self.z0, "encoding": self.encoding, "n_enetworks": self.n_enetworks,
                "residual_names": self.residual_names, "poi_names": list(POI_NAMES),
                "topologies": self.topologies, "seed": self.seed, "s_source": self.s_source,
                "count": len(self)}

    def save(self, path):
        cols = ["topology"]
        for j in range(self.n_enetworks):
            cols += [f"e{j + 1}_{c}" for c in S_COLUMNS]
        cols += list(self.residual_names) + list(POI_NAMES) + ["params"]
        rows = []
        for i in range(len(self)):
            row = [self.topology[i]]
            for s in self.s[i]:
                row += _s_cells(s)
            row += [repr(float(v)) for v in self.x_r[i]]
            row += [encode_number(v) for v in self.y[i]]
            row.append(json.dumps(self.params[i], sort_keys=True))
            rows.append(row)
        _write(path, self.header(), cols, rows)

    @classmethod
    def load(cls, path) -> "MainDataset":
        h, cols, rows = _read(path)
        if h.get("kind") != "main":
            raise DatasetError(f"{path} is not a main dataset")
        n_e, r = h["n_enetworks"], len(h["residual_names"])
        topo, ss, xr, y, params = [], [], [], [], []
        for row in rows:
            topo.append(row[0])
            ss.append([_s_from_cells(row[1 + 8 * j:9 + 8 * j]) for j in range(n_e)])
            k = 1 + 8 * n_e
            xr.append([float(c) for c in row[k:k + r]])
            y.append([float(c) for c in row[k + r:k + r + len(POI_NAMES)]])
            params.append(json.loads(row[-1]))
        y = np.array(y, dtype=float).reshape(len(rows), len(POI_NAMES))
        y[y == DB_FLOOR] = -np.inf
        return cls(h["frequency"], h["z0"], h["encoding"], n_e, h["residual_names"], topo, ss,
                   np.array(xr, dtype=float).reshape(len(rows), r), y, params,
                   h["topologies"], h["seed"], h["s_source"])


def _check_family(family: Sequence[nl.Netlist]):
    if not family:
        raise DatasetError("circuit family is empty")
    parts = [nl.partition(n) for n in family]
    n0 = len(parts[0].enetworks)
    r0 = parts[0].residual_names
    for n, p in zip(family, parts):
        if len(p.enetworks) != n0:
            raise DatasetError(f"{n.name} has {len(p.enetworks)} E-networks, "
                               f"{family[0].name} has {n0}")
        if p.residual_names != r0:
            raise DatasetError(f"{n.name}: residual parameters {p.residual_names} differ from {r0}")
    return parts


def sample_instance(net: nl.Netlist, rng: np.random.Generator, strategy: str = "declared"):
    """Random sizing of every ranged parameter plus random switch states."""
    values = {p.name: _draw(p, rng, strategy) for p in nl.enumerate_parameters(net)}
    for e in net.elements:
        if e.kind is ElementKind.SWITCH and e.name not in net.links:
            values[e.name] = float(rng.integers(0, 2))
    return values


def residual_vector(part: nl.Partition, inst: nl.Netlist) -> list[float]:
    lookup = {e.name: e.value for e in inst.elements}
    return [lookup[n] for n in part.residual_names]


def oracle_row(net: nl.Netlist, values: dict, f: float, z0: float = 50.0):
    """(E-network S-matrices, x_R, PoI) of one sized instance.

    The PoI comes from the skeleton circuit, i.e. the residual elements
    wired to S-parameter blocks, so it is a function of the stored s_j and
    x_R only.
    """
    inst = net.with_values(values)
    part = nl.partition(inst)
    ss = [mna_two_port(sub, f, z0) for sub in part.enetworks]
    xr = residual_vector(part, inst)
    y = poi_from_s(mna_two_port(part.skeleton(ss), f, z0))
    return ss, xr, y


def poi_from_parts(net: nl.Netlist, ss: Sequence[SMatrix], x_r: Sequence[float],
                   f: float, z0: float = 50.0) -> PoiVector:
    part = nl.partition(net)
    values = dict(zip(part.residual_names, x_r))
    return poi_from_s(mna_two_port(part.skeleton(list(ss), values), f, z0))


def random_passive_s(rng: np.random.Generator, reciprocal: bool = True) -> SMatrix:
    """Entries uniform in the complex unit disk, rejected until passive."""
    while True:
        r = np.sqrt(rng.random(4))
        th = rng.random(4) * 2 * np.pi
        z = r * np.exp(1j * th)
        s12 = z[2] if reciprocal else z[1]
        s = SMatrix(complex(z[0]), complex(s12), complex(z[2]), complex(z[3]))
        if s.spectral_norm() <= 1.0:
            return s


def gen_main_dataset(family: Sequence[nl.Netlist], cfg: SamplerConfig, f: float,
                     z0: float = 50.0, encoding: str | None = None) -> MainDataset:
    """Main-model rows ([s_1..s_N, x_R] -> PoI) for a family of topologies.

    from-topologies: pick a topology uniformly, size it randomly, solve each
    E-network.  synthetic-passive: draw reciprocal passive S-matrices
    directly and use the first topology's residual structure.
    """
    parts = _check_family(family)
    rng = np.random.default_rng(cfg.seed)
    keys = [nl.circuit_key(n) for n in family]
    topologies = {k: nl.render(n) for k, n in zip(keys, family)}
    if encoding is None:
        encoding = "reciprocal" if all(default_encoding(s.elements) == "reciprocal"
                                       for p in parts for s in p.enetworks) else "full"
    n_e = len(parts[0].enetworks)

    if cfg.s_source == "from-topologies":
        def draw():
            t = int(rng.integers(len(family)))
            return t, sample_instance(family[t], rng, cfg.strategy)

        def solve(sample):
            t, values = sample
            return oracle_row(family[t], values, f, z0)
    else:
        base = family[0]
        base_part = parts[0]

        def draw():
            ss = [random_passive_s(rng, reciprocal=encoding != "full") for _ in range(n_e)]
            values = sample_instance(base, rng, cfg.strategy)
            return ss, values

        def solve(sample):
            ss, values = sample
            inst = base.with_values(values)
            xr = residual_vector(base_part, inst)
            return ss, xr, poi_from_parts(inst, ss, xr, f, z0)

    rows = _solve_with_retries(cfg.count, draw, solve, "main dataset")
    topo, ss, xr, y, params = [], [], [], [], []
    for sample, (s_list, x_r, poi) in rows:
        if cfg.s_source == "from-topologies":
            t, values = sample
            topo.append(keys[t])
            params.append({k: float(v) for k, v in values.items()})
        else:
            topo.append("synthetic")
            params.append({})
        ss.append(list(s_list))
        xr.append(list(x_r))
        y.append([poi[name] for name in POI_NAMES])
    return MainDataset(float(f), float(z0), encoding, n_e, list(parts[0].residual_names), topo,
                       ss, np.array(xr, dtype=float).reshape(len(rows), -1),
                       np.array(y, dtype=float), params, topologies, cfg.seed, cfg.s_source)


# --- splitting ----------------------------------------------------------------

def split(ds, val_frac: float = 0.10, test_frac: float = 0.10, seed: int = 0):
    """Disjoint (train, val, test) subsets, stratified by topology if known.

    Unstratified: round(frac * n) rows per held-out part.  Stratified: the
    same rounding per topology, with at least one held-out row of each kind
    for every topology of three or more rows.
    """
    if not (0 < val_frac < 1 and 0 <= test_frac < 1 and val_frac + test_frac < 1):
        raise DatasetError("fractions must be in (0, 1) and sum below 1; test may be 0")
    n = len(ds)
    rng = np.random.default_rng(seed)
    strata = ds.strata()
    groups: dict = {}
    for i in range(n):
        groups.setdefault(strata[i] if strata is not None else None, []).append(i)
    train, val, test = [], [], []
    for key in sorted(groups, key=lambda k: "" if k is None else k):
        idx = np.array(groups[key])
        idx = idx[rng.permutation(len(idx))]
        m = len(idx)
        n_val = int(round(val_frac * m))
        n_test = int(round(test_frac * m))
        if strata is not None and m >= 3:
            n_val = max(1, n_val)
            n_test = max(1, n_test) if test_frac > 0 else 0
        test += idx[:n_test].tolist()
        val += idx[n_test:n_test + n_val].tolist()
        train += idx[n_test + n_val:].tolist()
    if not train or not val or (test_frac > 0 and not test):
        raise DatasetError(f"{n} rows are too few for a {val_frac}/{test_frac} split")
    return ds.subset(sorted(train)), ds.subset(sorted(val)), ds.subset(sorted(test))

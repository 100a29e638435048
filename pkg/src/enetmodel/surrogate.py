"""Feed-forward regressors written directly in numpy.

Two architectures share one training loop:

* ``Mlp``: dense ReLU stack with a linear output layer.
* ``CciModel``: one small ReLU chunk per E-network chained along the signal
  path (chunk i sees its own inputs plus the previous chunk's latent vector)
  and a single linear head on [last latent, residual inputs].

Inputs are optionally log-transformed and then standardised, targets are
standardised; the training loss is the mean absolute error in standardised
target units.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np


class TrainingError(Exception):
    pass


class EncodingMismatch(Exception):
    pass


@dataclass
class Affine:
    """x -> (f(x) - shift) / scale where f is log10 on the flagged columns."""
    shift: np.ndarray
    scale: np.ndarray
    log_mask: np.ndarray

    @classmethod
    def identity(cls, n: int) -> "Affine":
        return cls(np.zeros(n), np.ones(n), np.zeros(n, dtype=bool))

    @classmethod
    def fit(cls, x: np.ndarray, log_mask=None) -> "Affine":
        x = np.asarray(x, dtype=float)
        mask = np.zeros(x.shape[1], dtype=bool) if log_mask is None else np.asarray(log_mask, bool)
        z = x.copy()
        z[:, mask] = np.log10(z[:, mask])
        shift = z.mean(axis=0)
        scale = z.std(axis=0)
        scale[scale < 1e-12] = 1.0
        return cls(shift, scale, mask)

    def apply(self, x: np.ndarray) -> np.ndarray:
        z = np.array(x, dtype=float)
        if self.log_mask.any():
            z[:, self.log_mask] = np.log10(z[:, self.log_mask])
        return (z - self.shift) / self.scale

    def invert(self, z: np.ndarray) -> np.ndarray:
        x = np.asarray(z, dtype=float) * self.scale + self.shift
        if self.log_mask.any():
            x[:, self.log_mask] = 10.0 ** x[:, self.log_mask]
        return x

    def to_json(self) -> dict:
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist(),
                "log_mask": self.log_mask.tolist()}

    @classmethod
    def from_json(cls, d) -> "Affine":
        return cls(np.array(d["shift"], dtype=float), np.array(d["scale"], dtype=float),
                   np.array(d["log_mask"], dtype=bool))


def init_dense(sizes: Sequence[int], rng: np.random.Generator, relu_last: bool) -> list[np.ndarray]:
    """[W0, b0, W1, b1, ...]; He-uniform before ReLU, Glorot-uniform before a linear output."""
    params = []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        if last and not relu_last:
            lim = math.sqrt(6.0 / (n_in + n_out))
        else:
            lim = math.sqrt(6.0 / n_in)
        params.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
        params.append(np.zeros(n_out))
    return params


def dense_forward(params, x, relu_last: bool):
    """Returns (output, cache) with cache = inputs and pre-activations per layer."""
    cache = []
    h = x
    n_layers = len(params) // 2
    for k in range(n_layers):
        w, b = params[2 * k], params[2 * k + 1]
        z = h @ w + b
        cache.append((h, z))
        if k < n_layers - 1 or relu_last:
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h, cache


def dense_backward(params, cache, dout, relu_last: bool):
    """Gradients for every weight/bias plus d(loss)/d(input)."""
    n_layers = len(params) // 2
    grads = [None] * len(params)
    g = dout
    for k in range(n_layers - 1, -1, -1):
        h, z = cache[k]
        if k < n_layers - 1 or relu_last:
            g = g * (z > 0)
        grads[2 * k] = h.T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ params[2 * k].T
    return grads, g


class Mlp:
    """Dense regressor.  ``params`` is the flat list [W0, b0, W1, b1, ...]."""

    kind = "mlp"

    def __init__(self, params, input_norm: Affine, output_norm: Affine, meta=None):
        self.params = [np.asarray(p, dtype=float) for p in params]
        self.input_norm = input_norm
        self.output_norm = output_norm
        self.meta = dict(meta or {})
        for k in range(0, len(self.params) - 2, 2):
            if self.params[k].shape[1] != self.params[k + 2].shape[0]:
                raise ValueError(f"layer {k // 2} output does not match layer {k // 2 + 1} input")

    @classmethod
    def build(cls, n_in: int, hidden: Sequence[int], n_out: int, seed: int = 0,
              log_mask=None, meta=None) -> "Mlp":
        rng = np.random.default_rng(seed)
        params = init_dense([n_in, *hidden, n_out], rng, relu_last=False)
        norm_in = Affine.identity(n_in)
        if log_mask is not None:
            norm_in.log_mask = np.asarray(log_mask, dtype=bool)
        return cls(params, norm_in, Affine.identity(n_out), meta)

    @property
    def n_in(self) -> int:
        return self.params[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.params[-1].shape[0]

    @property
    def hidden(self) -> list[int]:
        return [self.params[k].shape[1] for k in range(0, len(self.params) - 2, 2)]

    def forward_normalized(self, z, need_cache=False):
        out, cache = dense_forward(self.params, z, relu_last=False)
        return (out, cache) if need_cache else out

    def backward_normalized(self, cache, dout):
        grads, _ = dense_backward(self.params, cache, dout, relu_last=False)
        return grads

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.n_in:
            raise ValueError(f"expected {self.n_in} inputs, got {x.shape[1]}")
        y = self.output_norm.invert(self.forward_normalized(self.input_norm.apply(x)))
        return y[0] if single else y

    __call__ = forward

    def to_json(self) -> dict:
        return {"type": self.kind, "params": [p.tolist() for p in self.params],
                "input_norm": self.input_norm.to_json(),
                "output_norm": self.output_norm.to_json(), "meta": self.meta}


class CciModel:
    """Chain of per-slot chunks joined by a one-layer linear head.

    ``groups[i]`` lists the input columns feeding chunk i; ``head_cols``
    lists the columns fed straight to the head (the residual parameters).
    ``shared_cols`` are fed to every chunk as well; residual switches need
    this, since a linear head alone cannot gate an E-network's contribution.
    """

    kind = "cci"

    def __init__(self, chunks, head, groups, head_cols, input_norm: Affine,
                 output_norm: Affine, meta=None, shared_cols=()):
        self.chunks = [[np.asarray(p, dtype=float) for p in c] for c in chunks]
        self.head = [np.asarray(p, dtype=float) for p in head]
        if len(self.head) != 2:
            raise ValueError("the head must be exactly one layer")
        self.groups = [list(map(int, g)) for g in groups]
        self.head_cols = list(map(int, head_cols))
        self.shared_cols = list(map(int, shared_cols))
        self.input_norm = input_norm
        self.output_norm = output_norm
        self.meta = dict(meta or {})
        widths = {c[-1].shape[0] for c in self.chunks}
        if len(widths) > 1:
            raise ValueError("all chunks must emit the same latent width")
        latent = widths.pop() if widths else 0
        if self.head[0].shape[0] != latent + len(self.head_cols):
            raise ValueError("head input width does not match latent + residual columns")

    @classmethod
    def build(cls, groups, head_cols, n_out: int, chunk_hidden=(32, 32), latent: int = 8,
              seed: int = 0, log_mask=None, meta=None, shared_cols=()) -> "CciModel":
        rng = np.random.default_rng(seed)
        chunks = []
        prev = 0
        for g in groups:
            n_in = len(g) + len(shared_cols) + prev
            chunks.append(init_dense([n_in, *chunk_hidden, latent], rng, relu_last=True))
            prev = latent
        head = init_dense([prev + len(head_cols), n_out], rng, relu_last=False)
        n_in = sum(len(g) for g in groups) + len(head_cols)
        norm_in = Affine.identity(n_in)
        if log_mask is not None:
            norm_in.log_mask = np.asarray(log_mask, dtype=bool)
        return cls(chunks, head, groups, head_cols, norm_in, Affine.identity(n_out), meta,
                   shared_cols)

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for c in self.chunks:
            out.extend(c)
        out.extend(self.head)
        return out

    @params.setter
    def params(self, flat):
        k = 0
        for c in self.chunks:
            for j in range(len(c)):
                c[j] = flat[k]
                k += 1
        self.head = [flat[k], flat[k + 1]]

    @property
    def n_in(self) -> int:
        return len(self.input_norm.shift)

    @property
    def n_out(self) -> int:
        return self.head[1].shape[0]

    def forward_normalized(self, z, need_cache=False):
        caches = []
        latent = None
        for c, g in zip(self.chunks, self.groups):
            cols = z[:, g + self.shared_cols]
            inp = cols if latent is None else np.concatenate([cols, latent], axis=1)
            latent, cache = dense_forward(c, inp, relu_last=True)
            caches.append(cache)
        parts = [z[:, self.head_cols]] if latent is None else [latent, z[:, self.head_cols]]
        head_in = np.concatenate(parts, axis=1)
        out, head_cache = dense_forward(self.head, head_in, relu_last=False)
        if need_cache:
            return out, (caches, head_cache)
        return out

    def backward_normalized(self, cache, dout):
        caches, head_cache = cache
        head_grads, dhead_in = dense_backward(self.head, head_cache, dout, relu_last=False)
        latent_width = dhead_in.shape[1] - len(self.head_cols)
        dlatent = dhead_in[:, :latent_width]
        chunk_grads = [None] * len(self.chunks)
        for i in range(len(self.chunks) - 1, -1, -1):
            grads, dinp = dense_backward(self.chunks[i], caches[i], dlatent, relu_last=True)
            chunk_grads[i] = grads
            dlatent = dinp[:, len(self.groups[i]) + len(self.shared_cols):]
        flat = []
        for g in chunk_grads:
            flat.extend(g)
        flat.extend(head_grads)
        return flat

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.n_in:
            raise ValueError(f"expected {self.n_in} inputs, got {x.shape[1]}")
        y = self.output_norm.invert(self.forward_normalized(self.input_norm.apply(x)))
        return y[0] if single else y

    __call__ = forward

    def to_json(self) -> dict:
        return {"type": self.kind, "chunks": [[p.tolist() for p in c] for c in self.chunks],
                "head": [p.tolist() for p in self.head], "groups": self.groups,
                "head_cols": self.head_cols, "shared_cols": self.shared_cols,
                "input_norm": self.input_norm.to_json(),
                "output_norm": self.output_norm.to_json(), "meta": self.meta}


def model_from_json(d):
    if d["type"] == "mlp":
        return Mlp(d["params"], Affine.from_json(d["input_norm"]),
                   Affine.from_json(d["output_norm"]), d.get("meta"))
    if d["type"] == "cci":
        return CciModel(d["chunks"], d["head"], d["groups"], d["head_cols"],
                        Affine.from_json(d["input_norm"]), Affine.from_json(d["output_norm"]),
                        d.get("meta"), d.get("shared_cols", ()))
    if d["type"] == "composed":
        return ComposedModel.from_json(d)
    raise ValueError(f"unknown model type {d['type']!r}")


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model.to_json(), fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return model_from_json(json.load(fh))


# --- loss, gradients, optimiser ------------------------------------------------

def mae_loss(model, z, t) -> float:
    return float(np.mean(np.abs(model.forward_normalized(z) - t)))


def backward(model, z, t):
    """MAE loss and its gradients on a normalised batch (sign(0) taken as 0)."""
    if len(z) == 0:
        raise ValueError("empty batch")
    out, cache = model.forward_normalized(z, need_cache=True)
    err = out - t
    loss = float(np.mean(np.abs(err)))
    dout = np.sign(err) / err.size
    return loss, model.backward_normalized(cache, dout)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState, lr: float | None = None):
    """One bias-corrected Adam update, in place; returns ``params``."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    lr = state.lr if lr is None else lr
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 5000
    patience: int = 125
    batch_size: int = 32          # 0 means full batch
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_epochs <= 0 or self.patience <= 0:
            raise ValueError("learning rate, max_epochs and patience must be positive")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.batch_size < 0:
            raise ValueError("batch_size must be >= 0")


@dataclass
class History:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = math.inf
    stopped_early: bool = False

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        for e, a, b in zip(self.epochs, self.train_loss, self.val_loss):
            lines.append(f"{e},{a!r},{b!r}")
        return "\n".join(lines) + "\n"


def train(model, x_train, y_train, x_val, y_val, cfg: TrainConfig = TrainConfig(),
          refit_norms: bool = True):
    """Adam + MAE with early stopping on the validation loss.

    Stops once ``patience`` epochs pass without a strictly lower validation
    loss, then restores the weights of the best epoch.  Normalisation is
    refitted on the training split unless ``refit_norms`` is False.
    """
    x_train, y_train = np.asarray(x_train, float), np.asarray(y_train, float)
    x_val, y_val = np.asarray(x_val, float), np.asarray(y_val, float)
    if len(x_train) == 0 or len(x_val) == 0:
        raise TrainingError("training and validation sets must be non-empty")
    if refit_norms:
        model.input_norm = Affine.fit(x_train, model.input_norm.log_mask)
        model.output_norm = Affine.fit(y_train)
    zt, tt = model.input_norm.apply(x_train), model.output_norm.apply(y_train)
    zv, tv = model.input_norm.apply(x_val), model.output_norm.apply(y_val)
    if not (np.all(np.isfinite(zt)) and np.all(np.isfinite(tt))):
        raise TrainingError("non-finite values in the normalised training data")

    rng = np.random.default_rng(cfg.seed)
    state = AdamState(lr=cfg.learning_rate)
    params = model.params
    n = len(zt)
    bs = n if cfg.batch_size == 0 else min(cfg.batch_size, n)
    hist = History()
    best = [p.copy() for p in params]
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, grads = backward(model, zt[idx], tt[idx])
            adam_step(params, grads, state)
            total += loss * len(idx)
        if isinstance(model, CciModel):
            model.params = params
        train_loss = total / n
        val_loss = mae_loss(model, zv, tv)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingError(f"epoch {epoch}: non-finite loss "
                                f"(train={train_loss}, val={val_loss})")
        hist.epochs.append(epoch)
        hist.train_loss.append(train_loss)
        hist.val_loss.append(val_loss)
        if val_loss < hist.best_val:
            hist.best_val = val_loss
            hist.best_epoch = epoch
            best = [p.copy() for p in params]
        elif epoch - hist.best_epoch >= cfg.patience:
            hist.stopped_early = True
            break
    for p, b in zip(params, best):
        p[...] = b
    if isinstance(model, CciModel):
        model.params = params
    model.meta["train"] = asdict(cfg)
    model.meta["best_epoch"] = hist.best_epoch
    return model, hist


def train_cci(model: CciModel, x_train, y_train, x_val, y_val,
              cfg: TrainConfig = TrainConfig(), refit_norms: bool = True):
    if not isinstance(model, CciModel):
        raise TypeError("train_cci needs a CciModel")
    return train(model, x_train, y_train, x_val, y_val, cfg, refit_norms)


def r2_score(pred, truth) -> float:
    """1 - SS_res / SS_tot; nan when the truths are all equal."""
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if len(pred) != len(truth) or len(truth) < 2:
        raise ValueError("need two equal-length vectors of at least two values")
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        return math.nan
    return 1.0 - float(np.sum((truth - pred) ** 2)) / ss_tot


def r2_columns(pred, truth) -> list[float]:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    return [r2_score(pred[:, k], truth[:, k]) for k in range(truth.shape[1])]


# --- composition ------------------------------------------------------------------

class ComposedModel:
    """Sub-models feeding a main model: PoI(x_1..x_N, x_R)."""

    kind = "composed"

    def __init__(self, subs, main, encoding: str, meta=None):
        self.subs = list(subs)
        self.main = main
        self.encoding = encoding
        self.meta = dict(meta or {})

    def to_json(self) -> dict:
        return {"type": self.kind, "subs": [s.to_json() for s in self.subs],
                "main": self.main.to_json(), "encoding": self.encoding, "meta": self.meta}

    @classmethod
    def from_json(cls, d) -> "ComposedModel":
        return cls([model_from_json(s) for s in d["subs"]], model_from_json(d["main"]),
                   d["encoding"], d.get("meta"))


def compose(subs, main, encoding: str, n_residual: int | None = None, meta=None) -> ComposedModel:
    from .dataset import ENCODINGS
    width = ENCODINGS[encoding]
    for i, s in enumerate(subs):
        if s.n_out != width:
            raise EncodingMismatch(f"sub-model {i} emits {s.n_out} values; "
                                   f"{encoding} encoding needs {width}")
        enc = s.meta.get("encoding")
        if enc is not None and enc != encoding:
            raise EncodingMismatch(f"sub-model {i} was trained on {enc!r} S-parameters")
    main_enc = main.meta.get("encoding")
    if main_enc is not None and main_enc != encoding:
        raise EncodingMismatch(f"main model expects {main_enc!r} S-parameters")
    expected = width * len(subs) + (n_residual if n_residual is not None
                                    else main.n_in - width * len(subs))
    if main.n_in != expected or main.n_in < width * len(subs):
        raise EncodingMismatch(f"main model takes {main.n_in} inputs; "
                               f"{len(subs)} sub-models supply {width * len(subs)}")
    return ComposedModel(subs, main, encoding, meta)


def predict_composed(cm: ComposedModel, xs, x_r) -> np.ndarray:
    """Main model applied to [sub_1(x_1), ..., sub_N(x_N), x_R]."""
    x_r = np.asarray(x_r, dtype=float)
    single = x_r.ndim == 1
    if single:
        x_r = x_r[None, :]
        xs = [np.asarray(x, dtype=float)[None, :] for x in xs]
    if len(xs) != len(cm.subs):
        raise ValueError(f"need {len(cm.subs)} parameter blocks, got {len(xs)}")
    feats = [sub.forward(np.asarray(x, dtype=float)) for sub, x in zip(cm.subs, xs)]
    z = np.concatenate(feats + [x_r], axis=1)
    out = cm.main.forward(z)
    return out[0] if single else out


def clone(model):
    return copy.deepcopy(model)

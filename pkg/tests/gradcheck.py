"""Central finite-difference check of the hand-written backward passes."""

import numpy as np

from enetmodel import surrogate as sg


def random_model(rng):
    """A small Mlp or CciModel with random shape and weights."""
    if rng.random() < 0.5:
        n_in = int(rng.integers(1, 6))
        hidden = tuple(int(h) for h in rng.integers(2, 9, size=rng.integers(1, 4)))
        n_out = int(rng.integers(1, 4))
        return sg.Mlp.build(n_in, hidden, n_out, seed=int(rng.integers(1 << 30)))
    n_groups = int(rng.integers(1, 4))
    col = 0
    groups = []
    for _ in range(n_groups):
        w = int(rng.integers(1, 4))
        groups.append(list(range(col, col + w)))
        col += w
    n_res = int(rng.integers(0, 3))
    res = list(range(col, col + n_res))
    hidden = tuple(int(h) for h in rng.integers(2, 7, size=rng.integers(1, 3)))
    shared = res if rng.random() < 0.5 else []
    return sg.CciModel.build(groups, res, int(rng.integers(1, 4)), chunk_hidden=hidden,
                             latent=int(rng.integers(2, 5)), seed=int(rng.integers(1 << 30)),
                             shared_cols=shared)


def _n_in(model):
    if isinstance(model, sg.Mlp):
        return model.n_in
    return sum(len(g) for g in model.groups) + len(model.head_cols)


def grad_check(model, rng, batch=6, eps=1e-6):
    """Max relative error between backprop and central differences.

    The probe loss is sum(R * output) for a random R, which is smooth except
    at ReLU kinks.  Coordinates whose one-sided slopes disagree straddle a
    kink and are skipped.  Returns (max_rel_err, n_checked, n_skipped).
    """
    z = rng.normal(size=(batch, _n_in(model)))
    weight = rng.normal(size=(batch, model.n_out))

    def loss():
        return float(np.sum(weight * model.forward_normalized(z)))

    _, cache = model.forward_normalized(z, need_cache=True)
    grads = model.backward_normalized(cache, weight)
    worst, checked, skipped = 0.0, 0, 0
    for p, g in zip(model.params, grads):
        flat, gflat = p.reshape(-1), np.asarray(g).reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            f0 = loss()
            flat[k] = old + eps
            fp = loss()
            flat[k] = old - eps
            fm = loss()
            flat[k] = old
            right, left = (fp - f0) / eps, (f0 - fm) / eps
            if abs(right - left) > 1e-4 * (abs(right) + abs(left)) + 1e-7:
                skipped += 1
                continue
            num = (fp - fm) / (2 * eps)
            err = abs(num - gflat[k]) / max(abs(num), abs(gflat[k]), 1e-6)
            worst = max(worst, err)
            checked += 1
    return worst, checked, skipped

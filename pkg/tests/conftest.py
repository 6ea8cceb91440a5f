import numpy as np
import pytest

from fairmtl.data import SynthSpec, generate_synthetic, split
from fairmtl.nn import mlp_init


def central_diff(f, arrays, h=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. every entry of ``arrays`` (mutated in place)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        for i in np.ndindex(a.shape):
            old = a[i]
            a[i] = old + h
            fp = f()
            a[i] = old - h
            fm = f()
            a[i] = old
            g[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def rel_error(analytic, numeric):
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - n) / scale)


def random_net(seed, max_params=500):
    rng = np.random.default_rng(seed)
    while True:
        d, h1, h2, T = rng.integers(2, 6), rng.integers(3, 9), rng.integers(2, 7), rng.integers(1, 4)
        net = mlp_init([int(d), int(h1), int(h2)], int(T), seed)
        if sum(a.size for a in net.parameter_arrays()) <= max_params:
            break
    # spread the biases so ReLU kinks stay away from the data
    for b in net.shared.biases:
        b += rng.normal(0, 0.1, b.shape)
    return net


def kink_free_inputs(net, rng, n, margin=1e-3):
    """Draw inputs whose ReLU pre-activations all sit at least ``margin`` from 0.

    A central difference that straddles a kink does not estimate the
    derivative, so such draws are rejected rather than compared.
    """
    from fairmtl.nn import forward
    while True:
        X = rng.normal(size=(n, net.input_dim))
        _, cache = forward(net, X)
        if all(np.abs(z).min() >= margin for z in cache.trunk.pre):
            return X


@pytest.fixture
def tiny_splits():
    ds = generate_synthetic(SynthSpec(n=240, d=4, T=2, bias=[0.4, 0.4], noise=0.05), seed=3)
    return split(ds, (0.6, 0.2, 0.2), seed=3)


def make_splits(n, d, T, seed=0, bias=0.4, noise=0.05):
    ds = generate_synthetic(SynthSpec(n=n, d=d, T=T, bias=bias, noise=noise), seed=seed)
    return split(ds, (0.6, 0.2, 0.2), seed=seed)


def count_oracle(net, ds):
    # row-by-row forward pass and hand counting
    acc, eo = [], []
    for t in range(net.n_tasks):
        counts = {(g, y, p): 0 for g in (0, 1) for y in (0, 1) for p in (0, 1)}
        hits = 0
        for u, s, y in zip(ds.U, ds.S, ds.Y[:, t]):
            h = u
            for W, b in zip(net.shared.weights, net.shared.biases):
                h = np.maximum(W @ h + b, 0)
            z = net.heads[t].weights[0] @ h + net.heads[t].biases[0]
            p1 = 1 / (1 + np.exp(z[0] - z[1]))
            pred = int(p1 >= 0.5)
            hits += pred == y
            counts[(s, y, pred)] += 1

        def rate(g, y):
            tot = counts[(g, y, 0)] + counts[(g, y, 1)]
            return counts[(g, y, 1 - y)] / tot if tot else None

        v = 0.0
        for y in (1, 0):  # FNR then FPR
            a, b = rate(1, y), rate(0, y)
            if a is not None and b is not None:
                v += abs(a - b)
        acc.append(hits / ds.n)
        eo.append(v)
    return acc, eo

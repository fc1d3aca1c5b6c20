"""Independent reference implementations used as test oracles."""

import itertools
import math

import numpy as np


def brute_force_shapley(model_fn, x, baseline, channel_axis=True):
    """Shapley values by averaging marginal contributions over every player
    ordering. Players are the channels (last axis) of a (T, D) window."""
    x = np.asarray(x, dtype=float)
    baseline = np.broadcast_to(np.asarray(baseline, dtype=float), x.shape)
    P = x.shape[1]

    def value(coalition):
        z = baseline.copy()
        for i in coalition:
            z[:, i] = x[:, i]
        return float(model_fn(z[None])[0])

    cache = {}
    phi = np.zeros(P)
    for order in itertools.permutations(range(P)):
        members = []
        for i in order:
            before = frozenset(members)
            members.append(i)
            after = frozenset(members)
            for key in (before, after):
                if key not in cache:
                    cache[key] = value(key)
            phi[i] += cache[after] - cache[before]
    return phi / math.factorial(P)


def kendall_pairs(a, b):
    """Kendall tau-a by explicit enumeration of index pairs."""
    n = len(a)
    s = 0
    for i in range(n):
        for j in range(i + 1, n):
            s += np.sign(a[i] - a[j]) * np.sign(b[i] - b[j])
    return s / (n * (n - 1) / 2)


def random_mlp(rng, T, D, hidden=5, ignore=()):
    """A small nonlinear window model; channels in ``ignore`` never reach the output."""
    W = rng.normal(size=(T * D, hidden))
    for k in ignore:
        W.reshape(T, D, hidden)[:, k, :] = 0.0
    b = rng.normal(size=hidden)
    v = rng.normal(size=hidden)

    def f(X):
        X = np.asarray(X, dtype=float)
        return np.tanh(X.reshape(len(X), -1) @ W + b) @ v

    return f


def linear_window_model(w):
    """f(x) = sum_i w_i mean_t x[t, i]; its Shapley values have a closed form."""
    w = np.asarray(w, dtype=float)
    return lambda X: np.asarray(X, dtype=float).mean(axis=1) @ w

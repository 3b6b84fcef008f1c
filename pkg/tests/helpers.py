"""Shared test utilities: finite-difference oracle and comparison helpers."""

import numpy as np

from ecgrhythm import autodiff as ad


def numeric_grad(f, x, h=1e-4):
    """Central finite differences of scalar f w.r.t. array x (in place probes)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b, floor=1e-3):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def grad_check(make_loss, arrays, tol=1e-4, h=1e-4):
    """Compare tape gradients of make_loss(*params) against finite differences.

    `arrays` are float64 numpy arrays; a fresh graph is built per probe so
    the loss must be a deterministic function of the inputs.
    """
    params = [ad.parameter(a) for a in arrays]
    with ad.Tape() as tape:
        loss = make_loss(*params)
        ad.backward(loss, tape)
    analytic = [p.grad.copy() for p in params]

    def value():
        outs = [ad.Tensor(a) for a in arrays]
        return float(make_loss(*outs).data)

    worst = 0.0
    for i, a in enumerate(arrays):
        fd = numeric_grad(value, a, h=h)
        err = rel_err(analytic[i], fd)
        worst = max(worst, err)
        assert err <= tol, f"gradient mismatch on input {i}: rel err {err:.3e} > {tol}"
    return worst


def projection_loss(op):
    """Wrap an op returning a tensor into a scalar via a fixed random projection."""
    store = {}

    def make(*params):
        out = op(*params)
        if "r" not in store:
            store["r"] = np.random.default_rng(7).standard_normal(out.data.shape)
        return ad.reduce_sum(ad.mul(out, ad.tensor(store["r"])))

    return make

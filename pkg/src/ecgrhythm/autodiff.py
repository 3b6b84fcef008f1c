"""Dense-tensor engine with reverse-mode automatic differentiation.

Provides exactly the operations the rhythm network and its two loss terms
need: elementwise arithmetic, matmul/dense, 1-D convolution and pooling,
activations, softmax, sequence plumbing (concat/narrow/stack/unstack), a
fused GRU cell, additive-attention reduction, the two training losses, the
reparameterized Gaussian draw, and an Adam optimizer.

Recording model: ops executed while a `Tape` is active append one entry
per op (creation order == topological order). `backward(loss)` walks the
entries once in reverse, accumulating gradients into `Tensor.grad`. With
no active tape, ops run forward-only at numpy speed.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import DomainError, NonFiniteValue, NotScalar, ShapeMismatch

_DEBUG_CHECKS = True


def set_debug_checks(enabled: bool) -> None:
    """Toggle the NaN/Inf tripwire applied to every op output."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def debug_checks_enabled() -> bool:
    return _DEBUG_CHECKS


class Tensor:
    """A dense array plus optional gradient slot.

    `requires_grad` marks trainable leaves; interior nodes are flagged
    internally when an op records them on the active tape.
    """

    __slots__ = ("data", "requires_grad", "grad", "_in_graph")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._in_graph = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def parameter(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


_tls = threading.local()


class Tape:
    """Ordered record of ops; context manager scoping one forward pass."""

    def __init__(self):
        # entry = (outputs: tuple[Tensor], parents: tuple[Tensor], backward_fn)
        self._entries = []

    def __enter__(self) -> "Tape":
        stack = getattr(_tls, "stack", None)
        if stack is None:
            stack = _tls.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tls.stack.pop()
        return False

    def __len__(self):
        return len(self._entries)

    @staticmethod
    def current() -> "Tape | None":
        stack = getattr(_tls, "stack", None)
        return stack[-1] if stack else None

    def record(self, outputs, parents, backward_fn) -> None:
        self._entries.append((outputs, parents, backward_fn))


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Populate `.grad` on every tensor contributing to the scalar loss.

    Trainable leaves touched by the tape but not on the loss path end up
    with zero gradients rather than None.
    """
    tape = tape if tape is not None else Tape.current()
    if tape is None:
        raise NotScalar("backward called with no active tape")
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    # First contributions are borrowed by reference; a second contribution
    # replaces the borrowed array out-of-place so shared buffers stay intact.
    borrowed: set[int] = set()
    for outputs, parents, fn in reversed(tape._entries):
        grads = tuple(o.grad for o in outputs)
        if all(g is None for g in grads):
            continue
        pgrads = fn(grads)
        for p, g in zip(parents, pgrads):
            if g is None or not (p.requires_grad or p._in_graph):
                continue
            if p.grad is None:
                p.grad = g
                borrowed.add(id(p))
            elif id(p) in borrowed:
                p.grad = p.grad + g
                borrowed.discard(id(p))
            else:
                p.grad += g
    for _, parents, _ in tape._entries:
        for p in parents:
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros_like(p.data)


def _coerce(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _check_finite(op: str, arr: np.ndarray) -> None:
    if _DEBUG_CHECKS and not np.isfinite(arr).all():
        raise NonFiniteValue(f"{op} produced non-finite values")


def _record1(op: str, out_data: np.ndarray, parents, backward_fn) -> Tensor:
    """Register a single-output op on the active tape (if any)."""
    _check_finite(op, out_data)
    out = Tensor(out_data)
    tape = Tape.current()
    if tape is not None and any(p.requires_grad or p._in_graph for p in parents):
        out._in_graph = True
        tape.record((out,), tuple(parents), lambda gs: backward_fn(gs[0]))
    return out


# --- elementwise arithmetic ---

def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _coerce(b, a)
    if b.data.shape not in ((), a.data.shape):
        raise ShapeMismatch("add", a.data.shape, b.data.shape)
    scalar_b = b.data.shape == ()
    return _record1(
        "add", a.data + b.data, (a, b),
        lambda g: (g, g.sum() if scalar_b else g),
    )


def sub(a, b) -> Tensor:
    if isinstance(a, Tensor):
        b = _coerce(b, a)
    else:
        a = _coerce(a, b)
    if a.data.shape != b.data.shape and () not in (a.data.shape, b.data.shape):
        raise ShapeMismatch("sub", a.data.shape, b.data.shape)
    sa, sb = a.data.shape == (), b.data.shape == ()
    return _record1(
        "sub", a.data - b.data, (a, b),
        lambda g: (g.sum() if sa else g, -(g.sum()) if sb else -g),
    )


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _coerce(b, a)
    if b.data.shape not in ((), a.data.shape):
        raise ShapeMismatch("mul", a.data.shape, b.data.shape)
    scalar_b = b.data.shape == ()
    ad, bd = a.data, b.data
    return _record1(
        "mul", ad * bd, (a, b),
        lambda g: (g * bd, (g * ad).sum() if scalar_b else g * ad),
    )


def add_broadcast(a: Tensor, b: Tensor) -> Tensor:
    """Add b (with singleton axes) onto a; gradient sums over broadcast axes."""
    if a.data.ndim != b.data.ndim:
        raise ShapeMismatch("add_broadcast", a.data.shape, b.data.shape)
    axes = []
    for i, (sa, sb) in enumerate(zip(a.data.shape, b.data.shape)):
        if sb == 1 and sa > 1:
            axes.append(i)
        elif sa != sb:
            raise ShapeMismatch("add_broadcast", a.data.shape, b.data.shape)
    axes = tuple(axes)
    return _record1(
        "add_broadcast", a.data + b.data, (a, b),
        lambda g: (g, g.sum(axis=axes, keepdims=True) if axes else g),
    )


# --- linear algebra ---

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch("matmul", a.data.shape, b.data.shape)
    ad, bd = a.data, b.data
    return _record1(
        "matmul", ad @ bd, (a, b),
        lambda g: (g @ bd.T, ad.T @ g),
    )


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map rows(x) @ w + b."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeMismatch("dense", x.data.shape, w.data.shape)
    if b.data.shape != (w.data.shape[1],):
        raise ShapeMismatch("dense bias", b.data.shape, (w.data.shape[1],))
    xd, wd = x.data, w.data
    return _record1(
        "dense", xd @ wd + b.data, (x, w, b),
        lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0)),
    )


# --- convolution / pooling ---

def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation along the last axis.

    Accepts (N, C_in, L) input with (C_out, C_in, K) kernels, or plain 1-D
    input with a 1-D kernel. Implemented as an im2col matmul.
    """
    squeeze = x.data.ndim == 1
    xd = x.data[None, None, :] if squeeze else x.data
    wd = w.data[None, None, :] if w.data.ndim == 1 else w.data
    if xd.ndim != 3 or wd.ndim != 3 or xd.shape[1] != wd.shape[1]:
        raise ShapeMismatch("conv1d", x.data.shape, w.data.shape)
    n, c_in, length = xd.shape
    c_out, _, k = wd.shape
    lp = length + 2 * padding
    if lp < k:
        raise ShapeMismatch("conv1d", x.data.shape, w.data.shape)
    # channels-last layout keeps every im2col window a contiguous K*C block
    xl = np.ascontiguousarray(xd.transpose(0, 2, 1))  # (N, L, C)
    xp = np.pad(xl, ((0, 0), (padding, padding), (0, 0))) if padding else xl
    l_out = (lp - k) // stride + 1
    cols = np.lib.stride_tricks.as_strided(
        xp, shape=(n, l_out, k * c_in),
        strides=(xp.strides[0], stride * c_in * xp.itemsize, xp.itemsize))
    # weight as (K*C, O) so rows match the window block layout
    w_mat = np.ascontiguousarray(wd.transpose(2, 1, 0)).reshape(k * c_in, c_out)
    flat = cols.reshape(n * l_out, k * c_in)  # copies once (strided gather)
    out_l = flat @ w_mat  # (N*L_out, C_out)
    if b is not None:
        out_l = out_l + b.data[None, :]
    out = np.ascontiguousarray(out_l.reshape(n, l_out, c_out).transpose(0, 2, 1))

    def bwd(g):
        if squeeze:
            g = g.reshape(1, c_out, l_out)
        g_mat = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(n * l_out, c_out)
        gw = (flat.T @ g_mat).reshape(k, c_in, c_out).transpose(2, 1, 0)
        gcols = (g_mat @ w_mat.T).reshape(n, l_out, k, c_in)
        gxp = np.zeros_like(xp)
        for kk in range(k):
            gxp[:, kk:kk + stride * l_out:stride] += gcols[:, :, kk]
        gxl = gxp[:, padding:padding + length] if padding else gxp
        gx = gxl.transpose(0, 2, 1)
        if squeeze:
            gx = gx[0, 0]
        gw = np.ascontiguousarray(gw)
        if w.data.ndim == 1:
            gw = gw[0, 0]
        parents_grads = [gx, gw]
        if b is not None:
            parents_grads.append(g_mat.sum(axis=0))
        return tuple(parents_grads)

    out_data = out[0, 0] if squeeze else out
    parents = (x, w) if b is None else (x, w, b)
    return _record1("conv1d", out_data, parents, bwd)


def avg_pool1d(x: Tensor, width: int, stride: int) -> Tensor:
    """Mean over sliding windows along the last axis (1-D or 2-D input)."""
    xd = x.data
    length = xd.shape[-1]
    if length < width:
        raise ShapeMismatch("avg_pool1d", x.data.shape, (width,))
    windows = np.lib.stride_tricks.sliding_window_view(xd, width, axis=-1)[..., ::stride, :]
    out = windows.mean(axis=-1)
    l_out = out.shape[-1]

    def bwd(g):
        gx = np.zeros_like(xd)
        share = g / width
        for kk in range(width):
            pos = np.arange(l_out) * stride + kk
            gx[..., pos] += share
        return (gx,)

    return _record1("avg_pool1d", out, (x,), bwd)


# --- activations ---

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record1("relu", x.data * mask, (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _record1("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _record1("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = _softmax(x.data, axis)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _record1("softmax", y, (x,), bwd)


def _softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


# --- shape plumbing ---

def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        sl = [slice(None)] * g.ndim
        grads = []
        for i in range(len(tensors)):
            sl[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return _record1("concat", out, tuple(tensors), bwd)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice `length` entries from `start` along `axis`."""
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[sl] = g
        return (gx,)

    return _record1("narrow", x.data[sl], (x,), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.data.shape
    return _record1("reshape", x.data.reshape(shape), (x,),
                    lambda g: (g.reshape(old),))


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    xd = x.data

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, xd.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, xd.shape).copy(),)

    return _record1("reduce_sum", xd.sum(axis=axis, keepdims=keepdims), (x,), bwd)


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    xd = x.data
    count = xd.size if axis is None else xd.shape[axis]

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / count, xd.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, xd.shape).copy(),)

    return _record1("reduce_mean", xd.mean(axis=axis, keepdims=keepdims), (x,), bwd)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.stack([t.data for t in tensors], axis=axis)

    def bwd(g):
        moved = np.moveaxis(g, axis, 0)
        return tuple(moved[i] for i in range(len(tensors)))

    return _record1("stack", out, tuple(tensors), bwd)


def unstack(x: Tensor, axis: int = 0):
    """Split into one tensor per index along `axis`; one tape entry total."""
    views = [np.ascontiguousarray(v) for v in np.moveaxis(x.data, axis, 0)]
    outs = tuple(Tensor(v) for v in views)
    tape = Tape.current()
    if tape is not None and (x.requires_grad or x._in_graph):
        for o in outs:
            o._in_graph = True

        def bwd(gs):
            parts = [g if g is not None else np.zeros_like(views[i])
                     for i, g in enumerate(gs)]
            return (np.moveaxis(np.stack(parts, axis=0), 0, axis),)

        tape.record(outs, (x,), bwd)
    return list(outs)


def weighted_sum(values: Tensor, weights: Tensor) -> Tensor:
    """Collapse (M, W, H) values with (M, W) weights into (M, H)."""
    if values.data.ndim != 3 or weights.data.shape != values.data.shape[:2]:
        raise ShapeMismatch("weighted_sum", values.data.shape, weights.data.shape)
    vd, wd = values.data, weights.data
    out = np.einsum("mwh,mw->mh", vd, wd, optimize=True)

    def bwd(g):
        gv = np.einsum("mh,mw->mwh", g, wd, optimize=True)
        gw = np.einsum("mh,mwh->mw", g, vd, optimize=True)
        return (gv, gw)

    return _record1("weighted_sum", out, (values, weights), bwd)


# --- fused GRU cell ---

def gru_cell(x: Tensor, h: Tensor, wx: Tensor, wh: Tensor, bx: Tensor,
             bh: Tensor) -> Tensor:
    """One GRU step; gate blocks laid out [reset | update | candidate].

        r = sigmoid(x@Wx_r + bx_r + h@Wh_r + bh_r)
        z = sigmoid(x@Wx_z + bx_z + h@Wh_z + bh_z)
        n = tanh(x@Wx_n + bx_n + r * (h@Wh_n + bh_n))
        h' = (1 - z) * n + z * h
    """
    bsz, hid = h.data.shape
    if x.data.ndim != 2 or x.data.shape[0] != bsz:
        raise ShapeMismatch("gru_cell", x.data.shape, h.data.shape)
    if wx.data.shape != (x.data.shape[1], 3 * hid) or wh.data.shape != (hid, 3 * hid):
        raise ShapeMismatch("gru_cell weights", wx.data.shape, wh.data.shape)
    xd, hd = x.data, h.data
    ax = xd @ wx.data + bx.data
    ah = hd @ wh.data + bh.data
    r = _sigmoid(ax[:, :hid] + ah[:, :hid])
    z = _sigmoid(ax[:, hid:2 * hid] + ah[:, hid:2 * hid])
    m = ah[:, 2 * hid:]
    n = np.tanh(ax[:, 2 * hid:] + r * m)
    out = (1.0 - z) * n + z * hd

    def bwd(g):
        dz = g * (hd - n) * z * (1.0 - z)
        dpre_n = g * (1.0 - z) * (1.0 - n * n)
        dm = dpre_n * r
        dpre_r = dpre_n * m * r * (1.0 - r)
        dax = np.concatenate([dpre_r, dz, dpre_n], axis=1)
        dah = np.concatenate([dpre_r, dz, dm], axis=1)
        gx = dax @ wx.data.T
        gh = dah @ wh.data.T + g * z
        gwx = xd.T @ dax
        gwh = hd.T @ dah
        return (gx, gh, gwx, gwh, dax.sum(axis=0), dah.sum(axis=0))

    return _record1("gru_cell", out, (x, h, wx, wh, bx, bh), bwd)


# --- losses ---

def reconstruction_loss(x: Tensor, x_hat: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    if x.data.shape != x_hat.data.shape:
        raise ShapeMismatch("reconstruction_loss", x.data.shape, x_hat.data.shape)
    diff = x.data - x_hat.data
    n = diff.size
    out = np.asarray((diff * diff).sum() / n, dtype=x.data.dtype)
    return _record1(
        "reconstruction_loss", out, (x, x_hat),
        lambda g: (g * 2.0 * diff / n, g * (-2.0) * diff / n),
    )


def gaussian_kl(mean: Tensor, log_var: Tensor) -> Tensor:
    """KL of a diagonal Gaussian against the standard normal.

    Per row: 0.5 * sum(exp(log_var) + mean^2 - 1 - log_var); rows averaged.
    """
    if mean.data.shape != log_var.data.shape:
        raise ShapeMismatch("gaussian_kl", mean.data.shape, log_var.data.shape)
    md = mean.data if mean.data.ndim == 2 else mean.data.reshape(1, -1)
    lv = log_var.data if log_var.data.ndim == 2 else log_var.data.reshape(1, -1)
    rows = md.shape[0]
    ev = np.exp(lv)
    out = np.asarray(0.5 * (ev + md * md - 1.0 - lv).sum() / rows,
                     dtype=mean.data.dtype)

    def bwd(g):
        gm = (g * md / rows).reshape(mean.data.shape)
        gl = (g * 0.5 * (ev - 1.0) / rows).reshape(log_var.data.shape)
        return (gm, gl)

    return _record1("gaussian_kl", out, (mean, log_var), bwd)


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class, from probabilities."""
    p = probs.data
    y = np.asarray(labels, dtype=np.int64)
    if p.ndim != 2 or y.shape != (p.shape[0],):
        raise ShapeMismatch("cross_entropy", p.shape, y.shape)
    if y.min() < 0 or y.max() >= p.shape[1]:
        raise DomainError(f"labels outside [0, {p.shape[1]})")
    if np.abs(p.sum(axis=1) - 1.0).max() > 1e-6:
        raise DomainError("probability rows must sum to 1")
    bsz = p.shape[0]
    sel = p[np.arange(bsz), y]
    if (sel <= 0).any():
        raise DomainError("selected class probability <= 0")
    out = np.asarray(-np.log(sel).mean(), dtype=p.dtype)

    def bwd(g):
        gp = np.zeros_like(p)
        gp[np.arange(bsz), y] = -g / (bsz * sel)
        return (gp,)

    return _record1("cross_entropy", out, (probs,), bwd)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Fused softmax + cross-entropy; gradient is (probs - onehot)/batch."""
    z = logits.data
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise ShapeMismatch("softmax_cross_entropy", z.shape, y.shape)
    if y.min() < 0 or y.max() >= z.shape[1]:
        raise DomainError(f"labels outside [0, {z.shape[1]})")
    bsz = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    out = np.asarray((lse - shifted[np.arange(bsz), y]).mean(), dtype=z.dtype)
    p = _softmax(z, axis=1)

    def bwd(g):
        gp = p.copy()
        gp[np.arange(bsz), y] -= 1.0
        return (g * gp / bsz,)

    return _record1("softmax_cross_entropy", out, (logits,), bwd)


def reparameterize(mean: Tensor, log_var: Tensor, scale: float, rng: "Rng") -> Tensor:
    """Draw z = mean + scale * std * eps with pathwise gradients.

    `scale` in [0, 1] shrinks the sampling std; 0 collapses to the mean.
    """
    if mean.data.shape != log_var.data.shape:
        raise ShapeMismatch("reparameterize", mean.data.shape, log_var.data.shape)
    if scale == 0.0:
        return _record1("reparameterize", mean.data.copy(), (mean, log_var),
                        lambda g: (g, None))
    eps = rng.normal(mean.data.shape, dtype=mean.data.dtype)
    noise = scale * np.exp(0.5 * log_var.data) * eps
    out = mean.data + noise
    return _record1("reparameterize", out, (mean, log_var),
                    lambda g: (g, g * 0.5 * noise))


# --- random streams ---

class Rng:
    """Counter-based (Philox) random stream, splittable into substreams.

    The (seed, path) pair fully determines the stream on every platform;
    `split(tag, ...)` derives an independent child stream.
    """

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(int(t) for t in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def split(self, *tags: int) -> "Rng":
        return Rng(self.seed, self.path + tags)

    def normal(self, shape=(), dtype=np.float64) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=dtype)

    def uniform(self, low: float, high: float, shape=(), dtype=np.float64) -> np.ndarray:
        return (low + (high - low) * self._gen.random(shape, dtype=dtype)).astype(dtype, copy=False)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)


# --- optimizer ---

class Adam:
    """Standard Adam with bias correction; deterministic given its state."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.data.shape:
                raise ShapeMismatch("adam_step", g.shape, p.data.shape)
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data = p.data - (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype, copy=False)

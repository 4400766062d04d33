"""Minimal reverse-mode autodiff over dense float64 arrays.

Implements exactly the operations the velocity networks and losses need:
3x3 convolution with replication padding, exact-erf GELU, affine layers,
mean-squared error, channel concatenation and bijective index permutation
(the latter backs the pack/unpack rearrangements). Everything runs in
float64 so finite-difference gradient checks can be held to tight
tolerances, and all reductions are sequential numpy calls, so repeated
runs on the same inputs are bit-identical.
"""

import itertools

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

_node_counter = itertools.count()


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class Tensor:
    """A float64 array with an optional gradient buffer.

    Tensors created by operations remember their parents and a backward
    closure; ``backward`` on a scalar loss walks that graph in reverse
    construction order (which is reverse-topological by construction).
    Gradients accumulate across backward calls until ``zero_grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_order")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = "leaf"
        self._parents = ()
        self._backward = None
        self._order = next(_node_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def _result(data, op, parents, backward_fn):
    """Wrap an op output, keeping graph links only when a parent needs grad."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    out.op = op
    return out


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# operations


def conv2d(x, kernel, bias):
    """3x3 cross-correlation with replication padding, same spatial size.

    x: (H, W, Cin); kernel: (3, 3, Cin, Cout); bias: (Cout,).
    The border row/column is replicated (padding=1) so geometric maps are
    not contaminated with artificial zeros.
    """
    x, kernel, bias = _as_tensor(x), _as_tensor(kernel), _as_tensor(bias)
    if x.data.ndim != 3:
        raise ShapeError(f"conv2d input must be (H, W, Cin), got {x.shape}")
    if kernel.data.ndim != 4 or kernel.shape[0] != 3 or kernel.shape[1] != 3:
        raise ShapeError(f"conv2d kernel must be (3, 3, Cin, Cout), got {kernel.shape}")
    h, w, cin = x.shape
    if kernel.shape[2] != cin:
        raise ShapeError(f"kernel Cin {kernel.shape[2]} != input Cin {cin}")
    cout = kernel.shape[3]
    if bias.shape != (cout,):
        raise ShapeError(f"bias must be ({cout},), got {bias.shape}")

    cols2d = x.data.reshape(h * w, cin)[_cols_index(h, w)].reshape(h * w, 9 * cin)
    k2d = kernel.data.reshape(9 * cin, cout)
    out = (cols2d @ k2d + bias.data).reshape(h, w, cout)

    def backward_fn(g):
        g2d = g.reshape(h * w, cout)
        if kernel.requires_grad:
            kernel.accumulate_grad((cols2d.T @ g2d).reshape(3, 3, cin, cout))
        if bias.requires_grad:
            bias.accumulate_grad(g2d.sum(axis=0))
        if x.requires_grad:
            dcols = (g2d @ k2d.T).reshape(h, w, 9, cin)
            dxp = np.zeros((h + 2, w + 2, cin))
            for n, (di, dj) in enumerate(_OFFSETS):
                dxp[di:di + h, dj:dj + w, :] += dcols[:, :, n, :]
            x.accumulate_grad(_fold_replication_pad(dxp))

    return _result(out, "conv2d", (x, kernel, bias), backward_fn)


_OFFSETS = [(di, dj) for di in range(3) for dj in range(3)]

_cols_index_cache = {}


def _cols_index(h, w):
    """Flat gather index realizing replication padding + 3x3 windowing:
    cols[p, n] = x[clip(i+di-1), clip(j+dj-1)] for pixel p=(i,j), offset n."""
    key = (h, w)
    if key not in _cols_index_cache:
        rows = np.clip(np.arange(h)[:, None, None, None] + np.arange(3)[None, None, :, None] - 1, 0, h - 1)
        cols = np.clip(np.arange(w)[None, :, None, None] + np.arange(3)[None, None, None, :] - 1, 0, w - 1)
        _cols_index_cache[key] = (rows * w + cols).reshape(-1)
    return _cols_index_cache[key]


def _fold_replication_pad(dxp):
    """Collapse the gradient of a 1-pixel replication pad back onto the source."""
    g = dxp[1:-1, 1:-1, :].copy()
    g[0, :, :] += dxp[0, 1:-1, :]
    g[-1, :, :] += dxp[-1, 1:-1, :]
    g[:, 0, :] += dxp[1:-1, 0, :]
    g[:, -1, :] += dxp[1:-1, -1, :]
    g[0, 0, :] += dxp[0, 0, :]
    g[0, -1, :] += dxp[0, -1, :]
    g[-1, 0, :] += dxp[-1, 0, :]
    g[-1, -1, :] += dxp[-1, -1, :]
    return g


def gelu(x):
    """Elementwise x * Phi(x) with the exact normal CDF (erf form)."""
    x = _as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def backward_fn(g):
        if x.requires_grad:
            pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
            x.accumulate_grad(g * (cdf + x.data * pdf))

    return _result(out, "gelu", (x,), backward_fn)


def linear(x, weight, bias):
    """Affine map (N, Din) @ (Din, Dout) + (Dout,)."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError(f"linear expects 2-d input and weight, got {x.shape}, {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"inner dims disagree: {x.shape} vs {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"bias must be ({weight.shape[1]},), got {bias.shape}")
    out = x.data @ weight.data + bias.data

    def backward_fn(g):
        if x.requires_grad:
            x.accumulate_grad(g @ weight.data.T)
        if weight.requires_grad:
            weight.accumulate_grad(x.data.T @ g)
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=0))

    return _result(out, "linear", (x, weight, bias), backward_fn)


def mse(a, b):
    """Mean squared elementwise difference; scalar output."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse shapes differ: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = max(diff.size, 1)
    out = np.mean(diff * diff)

    def backward_fn(g):
        scaled = (2.0 / n) * g * diff
        if a.requires_grad:
            a.accumulate_grad(scaled)
        if b.requires_grad:
            b.accumulate_grad(-scaled)

    return _result(out, "mse", (a, b), backward_fn)


def concat_channels(a, b):
    """Concatenate two (H, W, C) maps along the channel axis."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 3 or b.data.ndim != 3 or a.shape[:2] != b.shape[:2]:
        raise ShapeError(f"concat_channels needs matching (H, W): {a.shape} vs {b.shape}")
    ca = a.shape[2]
    out = np.concatenate([a.data, b.data], axis=2)

    def backward_fn(g):
        if a.requires_grad:
            a.accumulate_grad(g[:, :, :ca])
        if b.requires_grad:
            b.accumulate_grad(g[:, :, ca:])

    return _result(out, "concat_channels", (a, b), backward_fn)


def permute(x, index, out_shape):
    """Bijective flat index map: out.flat[i] = x.flat[index[i]].

    Backs the pack/unpack rearrangements; the gradient is the inverse
    permutation, so the op is exactly lossless in both directions.
    """
    x = _as_tensor(x)
    index = np.asarray(index)
    if index.size != x.size or int(np.prod(out_shape)) != x.size:
        raise ShapeError(
            f"permute: index size {index.size} and out shape {tuple(out_shape)} "
            f"must both cover input size {x.size}"
        )
    out = x.data.reshape(-1)[index].reshape(out_shape)

    def backward_fn(g):
        if x.requires_grad:
            gx = np.zeros(x.size)
            gx[index] = g.reshape(-1)
            x.accumulate_grad(gx.reshape(x.shape))

    return _result(out, "permute", (x,), backward_fn)


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss):
    """Populate .grad for every requires_grad tensor reachable from loss.

    loss must be a scalar node. Repeated calls accumulate into existing
    gradients; callers owning parameters reset them between steps.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    # op-produced nodes carry only this pass's flow; true leaves accumulate
    for node in topo:
        if node._parents:
            node.grad = None
    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)

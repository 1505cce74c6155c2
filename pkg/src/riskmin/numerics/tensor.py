"""Float64 tensors with a small reverse-mode autodiff engine.

Every differentiable operation is registered once as a (forward, backward)
pair of pure numpy functions. A :class:`Tensor` produced by an operation keeps
the op name, its input tensors and the op attributes, which is enough both to
backpropagate and to re-execute the recorded computation (:meth:`Graph.replay`).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Graph",
    "tensor",
    "backward",
    "OPS",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""

    def __init__(self, op: str, shapes: Sequence[tuple[int, ...]], detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{op}: incompatible operand shapes {list(self.shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


Forward = Callable[..., np.ndarray]
Backward = Callable[..., tuple]

# name -> (forward, backward). backward(grad_out, out, *inputs, **attrs) returns
# one gradient per input (None for non-differentiable inputs).
OPS: dict[str, tuple[Forward, Backward]] = {}

_RECORDING: list["Graph"] = []


def _register(name: str, forward: Forward, backward_fn: Backward) -> None:
    OPS[name] = (forward, backward_fn)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "inputs", "attrs", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op: str | None = None
        self.inputs: tuple[Tensor, ...] = ()
        self.attrs: dict = {}
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar
    def __add__(self, other):
        return apply("add", self, other)

    def __radd__(self, other):
        return apply("add", other, self)

    def __sub__(self, other):
        return apply("sub", self, other)

    def __rsub__(self, other):
        return apply("sub", other, self)

    def __mul__(self, other):
        return apply("mul", self, other)

    def __rmul__(self, other):
        return apply("mul", other, self)

    def __truediv__(self, other):
        return apply("div", self, other)

    def __neg__(self):
        return apply("neg", self)

    def __matmul__(self, other):
        return apply("matmul", self, other)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def apply(op: str, *inputs, **attrs) -> Tensor:
    """Run a registered op on tensors (non-tensors become constants)."""
    ins = tuple(_lift(x) for x in inputs)
    forward, _ = OPS[op]
    out = Tensor(forward(*(t.data for t in ins), **attrs))
    out.op = op
    out.inputs = ins
    out.attrs = attrs
    out.requires_grad = any(t.requires_grad for t in ins)
    if _RECORDING:
        _RECORDING[-1].nodes.append(out)
    return out


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.inputs):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> list[np.ndarray] | None:
    """Backpropagate from a scalar ``loss``.

    Gradients are accumulated into ``.grad`` of every tensor with
    ``requires_grad``. When ``params`` is given, their gradients are also
    returned in order, with zeros for parameters the loss does not reach.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topological(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and node.op is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node.op is None:
            continue
        _, bwd = OPS[node.op]
        in_grads = bwd(g, node.data, *(t.data for t in node.inputs), **node.attrs)
        for parent, pg in zip(node.inputs, in_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    if params is None:
        return None
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


class Graph:
    """Records every op executed inside its ``with`` block, in execution order."""

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Graph":
        _RECORDING.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _RECORDING.remove(self)

    def leaves(self) -> list[Tensor]:
        produced = {id(n) for n in self.nodes}
        out: list[Tensor] = []
        seen: set[int] = set()
        for n in self.nodes:
            for t in n.inputs:
                if id(t) not in produced and id(t) not in seen:
                    seen.add(id(t))
                    out.append(t)
        return out

    def backward(self, loss: Tensor, params: Iterable[Tensor] | None = None):
        if not any(n is loss for n in self.nodes):
            raise ValueError("loss node was not recorded in this graph")
        return backward(loss, params)

    def replay(self, feeds: dict[int, np.ndarray] | None = None) -> list[np.ndarray]:
        """Re-execute the recorded ops; ``feeds`` maps ``id(leaf)`` to new data.

        Returns the recomputed value of every node in recording order.
        """
        feeds = feeds or {}
        values: dict[int, np.ndarray] = {}
        out: list[np.ndarray] = []
        for n in self.nodes:
            args = []
            for t in n.inputs:
                if id(t) in values:
                    args.append(values[id(t)])
                else:
                    args.append(np.asarray(feeds.get(id(t), t.data), dtype=np.float64))
            fwd, _ = OPS[n.op]
            v = fwd(*args, **n.attrs)
            values[id(n)] = v
            out.append(v)
        return out


# ---------------------------------------------------------------- elementwise


def _broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, [a.shape, b.shape]) from None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(name: str, f, df):
    def forward(a, b):
        _broadcast(name, a, b)
        return f(a, b)

    def bwd(g, out, a, b):
        ga, gb = df(g, out, a, b)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    _register(name, forward, bwd)


_binary("add", np.add, lambda g, o, a, b: (g, g))
_binary("sub", np.subtract, lambda g, o, a, b: (g, -g))
_binary("mul", np.multiply, lambda g, o, a, b: (g * b, g * a))
_binary("div", np.divide, lambda g, o, a, b: (g / b, -g * a / (b * b)))

_register("neg", np.negative, lambda g, o, a: (-g,))
_register("square", np.square, lambda g, o, a: (2.0 * a * g,))
_register("relu", lambda a: np.maximum(a, 0.0), lambda g, o, a: (g * (a > 0),))
_register("tanh", np.tanh, lambda g, o, a: (g * (1.0 - o * o),))
_register("exp", np.exp, lambda g, o, a: (g * o,))


def _log(a):
    if np.any(a <= 0):
        raise ValueError("log: non-positive input")
    return np.log(a)


_register("log", _log, lambda g, o, a: (g / a,))


# ---------------------------------------------------------------- reductions


def _sum(a, axis=None, keepdims=False):
    return np.asarray(np.sum(a, axis=axis, keepdims=keepdims))


def _sum_bwd(g, o, a, axis=None, keepdims=False):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)


def _mean(a, axis=None, keepdims=False):
    return np.asarray(np.mean(a, axis=axis, keepdims=keepdims))


def _mean_bwd(g, o, a, axis=None, keepdims=False):
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    (ga,) = _sum_bwd(g, o, a, axis=axis, keepdims=keepdims)
    return (ga / count,)


_register("sum", _sum, _sum_bwd)
_register("mean", _mean, _mean_bwd)


def _softmax(a, axis=-1):
    z = a - a.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _softmax_bwd(g, o, a, axis=-1):
    return (o * (g - (g * o).sum(axis=axis, keepdims=True)),)


def _log_softmax(a, axis=-1):
    z = a - a.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def _log_softmax_bwd(g, o, a, axis=-1):
    return (g - np.exp(o) * g.sum(axis=axis, keepdims=True),)


_register("softmax", _softmax, _softmax_bwd)
_register("log_softmax", _log_softmax, _log_softmax_bwd)


# ---------------------------------------------------------------- structural


def _matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", [a.shape, b.shape], "expected (n,k) @ (k,m)")
    return a @ b


_register("matmul", _matmul, lambda g, o, a, b: (g @ b.T, a.T @ g))


def _concat(*arrays, axis=0):
    ref = arrays[0].shape
    ax = axis % len(ref)
    for arr in arrays[1:]:
        if arr.ndim != len(ref) or any(
            arr.shape[i] != ref[i] for i in range(len(ref)) if i != ax
        ):
            raise ShapeError("concat", [x.shape for x in arrays], f"axis={axis}")
    return np.concatenate(arrays, axis=axis)


def _concat_bwd(g, o, *arrays, axis=0):
    cuts = np.cumsum([x.shape[axis] for x in arrays])[:-1]
    return tuple(np.split(g, cuts, axis=axis))


_register("concat", _concat, _concat_bwd)


def _reshape(a, shape=()):
    try:
        return a.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", [a.shape, tuple(shape)]) from None


_register("reshape", _reshape, lambda g, o, a, shape=(): (g.reshape(a.shape),))


# ---------------------------------------------------------------- conv / pool


def _pool_view(a, k):
    if a.ndim != 4:
        raise ShapeError("maxpool2d", [a.shape], "expected (N,C,H,W)")
    n, c, h, w = a.shape
    ho, wo = h // k, w // k
    if ho == 0 or wo == 0:
        raise ShapeError("maxpool2d", [a.shape], f"spatial size smaller than window {k}")
    crop = a[:, :, : ho * k, : wo * k]
    # (N, C, Ho, Wo, k*k) with window entries in row-major order
    return crop.reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)


def _maxpool(a, k=2):
    return _pool_view(a, k).max(axis=-1)


def _maxpool_bwd(g, o, a, k=2):
    win = _pool_view(a, k)
    idx = win.argmax(axis=-1)  # first maximum wins ties
    mask = np.zeros_like(win)
    np.put_along_axis(mask, idx[..., None], 1.0, axis=-1)
    n, c, ho, wo, _ = win.shape
    gw = (mask * g[..., None]).reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5)
    ga = np.zeros_like(a)
    ga[:, :, : ho * k, : wo * k] = gw.reshape(n, c, ho * k, wo * k)
    return (ga,)


_register("maxpool2d", _maxpool, _maxpool_bwd)


def _conv_dims(x, w, stride):
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError("conv2d", [x.shape, w.shape], "expected x (N,C,H,W), w (O,C,kh,kw)")
    kh, kw = w.shape[2:]
    ho = (x.shape[2] - kh) // stride + 1
    wo = (x.shape[3] - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError("conv2d", [x.shape, w.shape], "kernel larger than input")
    return kh, kw, ho, wo


def _conv2d(x, w, b, stride=1):
    """Valid cross-correlation, looping over kernel offsets."""
    kh, kw, ho, wo = _conv_dims(x, w, stride)
    if b.shape != (w.shape[0],):
        raise ShapeError("conv2d", [x.shape, w.shape, b.shape], "bias must be (O,)")
    out = np.zeros((x.shape[0], w.shape[0], ho, wo))
    for i in range(kh):
        for j in range(kw):
            patch = x[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
            out += np.einsum("nchw,oc->nohw", patch, w[:, :, i, j])
    return out + b[None, :, None, None]


def _conv2d_bwd(g, o, x, w, b, stride=1):
    kh, kw, ho, wo = _conv_dims(x, w, stride)
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None), slice(None), slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
            gw[:, :, i, j] = np.einsum("nohw,nchw->oc", g, x[sl])
            gx[sl] += np.einsum("nohw,oc->nchw", g, w[:, :, i, j])
    return gx, gw, g.sum(axis=(0, 2, 3))


_register("conv2d", _conv2d, _conv2d_bwd)

"""Dense tensors with a reverse-mode differentiation tape.

Operations run eagerly on numpy arrays. While a :class:`Tape` is active,
every operation that touches a tensor with ``requires_grad=True`` appends a
node holding its inputs and a backward closure; :func:`backward` then walks
the tape once in reverse append order.

Example::

    w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    with Tape():
        loss = tsum(tanh(matmul(w, x)))
        grads = backward(loss)
    grads.of(w)
"""

from __future__ import annotations

import contextlib
from typing import Callable, NamedTuple, Sequence

import numpy as np

from dialogact.errors import ContractError, DimensionError, NumericError

DEFAULT_DTYPE = np.float64

REGISTERED_OPS: dict[str, Callable] = {}


def register_op(name: str):
    def deco(fn):
        REGISTERED_OPS[name] = fn
        return fn

    return deco


class Tensor:
    """A dense row-major array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "node_id", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = DEFAULT_DTYPE
        arr = np.ascontiguousarray(data, dtype=dtype)
        if not np.isfinite(arr).all():
            raise NumericError(f"tensor {name!r} constructed with non-finite values")
        self.data = arr
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self._tape: Tape | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


class Node(NamedTuple):
    kind: str
    inputs: tuple[int, ...]
    backward: Callable | None
    leaf: Tensor | None


class Tape:
    """Ordered record of operations; inputs always precede their consumers."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _STACK.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def _node_for(self, t: Tensor) -> int:
        if t._tape is not self:
            t._tape = self
            t.node_id = len(self.nodes)
            self.nodes.append(Node("leaf", (), None, t))
        return t.node_id


_STACK: list[Tape] = []


def active_tape() -> Tape | None:
    return _STACK[-1] if _STACK else None


@contextlib.contextmanager
def no_tape():
    """Suspend recording (evaluation mode)."""
    saved = list(_STACK)
    _STACK.clear()
    try:
        yield
    finally:
        _STACK.extend(saved)


def _result(kind: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    if not np.isfinite(data).all():
        raise NumericError(f"{kind} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    out.node_id = None
    out._tape = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = active_tape()
    if out.requires_grad and tape is not None:
        ids = tuple(tape._node_for(t) if t.requires_grad else -1 for t in inputs)
        out._tape = tape
        out.node_id = len(tape.nodes)
        tape.nodes.append(Node(kind, ids, backward_fn, None))
    return out


class Gradients(dict):
    """Mapping of node id to gradient array for every leaf on a tape."""

    def __init__(self, tape: Tape):
        super().__init__()
        self.tape = tape

    def of(self, t: Tensor) -> np.ndarray:
        if t._tape is self.tape and t.node_id in self:
            return self[t.node_id]
        return np.zeros_like(t.data)


def backward(loss: Tensor) -> Gradients:
    """Gradient of a scalar loss with respect to every leaf on its tape."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise ContractError("loss is not recorded on a tape")
    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[loss.node_id] = np.ones_like(loss.data)
    for idx in range(loss.node_id, -1, -1):
        node = tape.nodes[idx]
        g = grads[idx]
        if node.backward is None or g is None:
            continue
        for i, gi in zip(node.inputs, node.backward(g)):
            if i < 0 or gi is None:
                continue
            grads[i] = gi if grads[i] is None else grads[i] + gi
    out = Gradients(tape)
    for idx, node in enumerate(tape.nodes):
        if node.leaf is not None:
            g = grads[idx]
            out[idx] = np.zeros_like(node.leaf.data) if g is None else g
    return out


# -- operations --------------------------------------------------------------


@register_op("matmul")
def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data

    def bw(g):
        return g @ B.T, A.T @ g

    return _result("matmul", A @ B, (a, b), bw)


def _check_broadcast(kind, a, b):
    if a.shape == b.shape:
        return False
    if a.data.ndim >= 2 and b.data.ndim == 1 and b.shape[0] == a.shape[-1]:
        return True
    if a.data.ndim == 2 and b.shape == (1, a.shape[1]):
        return True
    raise DimensionError(f"{kind}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g, shape):
    return g.reshape(-1, g.shape[-1]).sum(axis=0).reshape(shape)


@register_op("add")
def add(a: Tensor, b: Tensor) -> Tensor:
    bcast = _check_broadcast("add", a, b)
    bshape = b.shape

    def bw(g):
        return g, (_reduce_to(g, bshape) if bcast else g)

    return _result("add", a.data + b.data, (a, b), bw)


@register_op("sub")
def sub(a: Tensor, b: Tensor) -> Tensor:
    bcast = _check_broadcast("sub", a, b)
    bshape = b.shape

    def bw(g):
        return g, -(_reduce_to(g, bshape) if bcast else g)

    return _result("sub", a.data - b.data, (a, b), bw)


@register_op("mul")
def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data

    def bw(g):
        return g * B, g * A

    return _result("mul", A * B, (a, b), bw)


@register_op("scale")
def scale(a: Tensor, c: float) -> Tensor:
    return _result("scale", a.data * c, (a,), lambda g: (g * c,))


@register_op("tanh")
def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@register_op("sigmoid")
def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return _result("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "tanh": tanh, "sigmoid": sigmoid}


def elementwise(op: str, *args: Tensor) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


def softmax_array(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@register_op("softmax_rows")
def softmax_rows(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"softmax_rows expects a matrix, got shape {x.shape}")
    y = softmax_array(x.data)

    def bw(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _result("softmax_rows", y, (x,), bw)


@register_op("concat")
def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ContractError("concat of an empty sequence")
    if len(tensors) == 1:
        return tensors[0]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            s != r for d, (s, r) in enumerate(zip(t.shape, ref)) if d != ax
        ):
            raise DimensionError(f"concat along axis {axis}: shapes {ref} and {t.shape} disagree")
    splits = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=ax))

    return _result("concat", np.concatenate([t.data for t in tensors], axis=ax), tensors, bw)


@register_op("transpose")
def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    return _result("transpose", np.ascontiguousarray(a.data.T), (a,), lambda g: (g.T,))


@register_op("reshape")
def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = a.shape
    try:
        y = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {src} as {shape}") from None
    return _result("reshape", y, (a,), lambda g: (g.reshape(src),))


@register_op("take_rows")
def take_rows(a: Tensor, index) -> Tensor:
    """Gather rows of a matrix (embedding lookup); gradients scatter-add back."""
    idx = np.asarray(index, dtype=np.intp)
    if a.data.ndim != 2 or idx.ndim != 1:
        raise DimensionError(f"take_rows: need matrix and flat index, got {a.shape} and {idx.shape}")
    n = a.shape[0]

    def bw(g):
        out = np.zeros((n, g.shape[1]), dtype=g.dtype)
        np.add.at(out, idx, g)
        return (out,)

    return _result("take_rows", a.data[idx], (a,), bw)


@register_op("max_axis")
def max_axis(a: Tensor, axis: int, mask: np.ndarray | None = None) -> Tensor:
    """Maximum along ``axis``. Positions where ``mask`` is False are ignored."""
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=axis).all():
            raise ContractError("max_axis: a slice has no unmasked entries")
        x = np.where(mask, x, -np.inf)
    arg = np.expand_dims(np.argmax(x, axis=axis), axis)
    y = np.take_along_axis(x, arg, axis=axis).squeeze(axis)
    src = a.shape

    def bw(g):
        out = np.zeros(src, dtype=g.dtype)
        np.put_along_axis(out, arg, np.expand_dims(g, axis), axis=axis)
        return (out,)

    return _result("max_axis", np.ascontiguousarray(y), (a,), bw)


@register_op("sum")
def tsum(a: Tensor) -> Tensor:
    src = a.shape
    return _result("sum", np.asarray(a.data.sum()), (a,), lambda g: (np.full(src, g, dtype=a.data.dtype),))

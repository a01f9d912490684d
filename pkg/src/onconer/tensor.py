"""Small dense-tensor engine with reverse-mode differentiation.

Everything is float64. A :class:`Tensor` wraps a numpy array, remembers the
tensors it was computed from and a closure that pushes its gradient back to
them. :func:`backward` walks the graph in reverse topological order.

Broadcasting is deliberately restricted: elementwise ops require equal shapes,
except that ``add`` accepts a right operand whose shape is a suffix of the left
one (bias add). Anything else goes through :func:`broadcast_to`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class ContractError(RuntimeError):
    """Raised when a precondition of an engine call is violated."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Iterable[Tensor], backward) -> Tensor:
    parents = tuple(parents)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _shape_error(op: str, a: tuple, b: tuple) -> DimensionError:
    return DimensionError(f"{op}: incompatible shapes {a} and {b}")


# ---------------------------------------------------------------------------
# forward ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        bias = False
    elif b.ndim <= a.ndim and a.shape[a.ndim - b.ndim:] == b.shape:
        bias = True
    else:
        raise _shape_error("add", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g.reshape((-1,) + b.shape).sum(axis=0) if bias else g)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    return add(a, neg(b))


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a._accumulate(-g)

    return _result(-a.data, (a,), backward)


def mul(a, b) -> Tensor:
    """Elementwise product; ``b`` may also be a python scalar."""
    a = as_tensor(a)
    if np.isscalar(b):
        c = float(b)

        def backward_scalar(g):
            a._accumulate(g * c)

        return _result(a.data * c, (a,), backward_scalar)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise _shape_error("mul", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _result(a.data * b.data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.multiply.outer(g, b.data) if b.ndim == 1 else g @ b.data.T)
        if b.requires_grad:
            if a.ndim == 1:
                b._accumulate(np.multiply.outer(a.data, g))
            else:
                b._accumulate(a.data.T @ g)

    return _result(a.data @ b.data, (a, b), backward)


def affine(x, W, b) -> Tensor:
    """``x @ W.T + b`` for x of shape (..., in), W (out, in), b (out,)."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise _shape_error("affine", x.shape, W.shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ W.data)
        g2 = g.reshape(-1, W.shape[0])
        if W.requires_grad:
            W._accumulate(g2.T @ x.data.reshape(-1, W.shape[1]))
        if b.requires_grad:
            b._accumulate(g2.sum(axis=0))

    return _result(x.data @ W.data.T + b.data, (x, W, b), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - y * y))

    return _result(y, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)

    def backward(g):
        a._accumulate(g * y * (1.0 - y))

    return _result(y, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)

    def backward(g):
        a._accumulate(g * y)

    return _result(y, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g / a.data)

    return _result(np.log(a.data), (a,), backward)


def concat(tensors: list, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat of an empty list")
    ax = axis % tensors[0].ndim
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise _shape_error("concat", ref, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, cuts, axis=ax)):
            if t.requires_grad:
                t._accumulate(piece)

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def stack(tensors: list, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != ref:
            raise _shape_error("stack", ref, t.shape)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def logsumexp(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    shifted = np.exp(a.data - m)
    s = shifted.sum(axis=axis, keepdims=True)
    y = np.squeeze(m + np.log(s), axis=axis)

    def backward(g):
        a._accumulate(np.expand_dims(g, axis) * shifted / s)

    return _result(y, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data - np.max(a.data, axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        a._accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _result(y, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    lse = m + np.log(np.exp(a.data - m).sum(axis=axis, keepdims=True))
    y = a.data - lse

    def backward(g):
        a._accumulate(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return _result(y, (a,), backward)


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape))
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _result(np.sum(a.data, axis=axis), (a,), backward)


def mean(a) -> Tensor:
    a = as_tensor(a)
    return mul(sum(a), 1.0 / a.data.size)


def take(a, index) -> Tensor:
    """Numpy-style indexing; gradients scatter-add back (handles repeats)."""
    a = as_tensor(a)
    if isinstance(index, Tensor):
        raise ContractError("index must be an integer array, not a Tensor")

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        a._accumulate(full)

    return _result(a.data[index], (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _result(a.data.reshape(shape), (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        a._accumulate(np.transpose(g, inv))

    return _result(np.transpose(a.data, axes), (a,), backward)


def broadcast_to(a, shape) -> Tensor:
    """Explicit numpy broadcast; the gradient is summed back to ``a.shape``."""
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        y = np.broadcast_to(a.data, shape)
    except ValueError:
        raise _shape_error("broadcast_to", a.shape, shape) from None
    lead = len(shape) - a.ndim
    keep = tuple(i for i, n in enumerate(a.shape) if n == 1 and shape[lead + i] != 1)

    def backward(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        if keep:
            g = g.sum(axis=keep, keepdims=True)
        a._accumulate(g)

    return _result(np.array(y), (a,), backward)


def einsum(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum with an explicit output, e.g. ``"id,dce->ice"``."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    try:
        y = np.einsum(f"{sa},{sb}->{out}", a.data, b.data)
    except ValueError:
        raise _shape_error(f"einsum {subscripts}", a.shape, b.shape) from None

    def backward(g):
        # summed-out indices unique to one operand come back via broadcasting
        if a.requires_grad:
            ga = np.einsum(f"{out},{sb}->{''.join(c for c in sa if c in out + sb)}", g, b.data)
            a._accumulate(_expand_missing(ga, sa, out + sb, a.shape))
        if b.requires_grad:
            gb = np.einsum(f"{out},{sa}->{''.join(c for c in sb if c in out + sa)}", g, a.data)
            b._accumulate(_expand_missing(gb, sb, out + sa, b.shape))

    return _result(y, (a, b), backward)


def _expand_missing(g: np.ndarray, subs: str, avail: str, shape) -> np.ndarray:
    if all(c in avail for c in subs):
        return g
    for i, c in enumerate(subs):
        if c not in avail:
            g = np.expand_dims(g, i)
    return np.broadcast_to(g, shape)


def dropout(a, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; the identity outside training."""
    a = as_tensor(a)
    if not training or p <= 0.0:
        return a
    if rng is None:
        raise ContractError("dropout in training mode needs an rng")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return mul(a, Tensor(mask))


# ---------------------------------------------------------------------------
# differentiation

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every differentiable tensor reachable from ``loss``.

    Gradients accumulate, so call :meth:`ParameterStore.zero_grad` (or the
    optimizer step, which zeroes) between independent passes.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    loss._accumulate(np.ones((), dtype=DTYPE))
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        g = node.grad
        # interior nodes hold their gradient only while it is being pushed back
        node.grad = None
        node._backward(g)


# central differences at eps=1e-5 carry ~1e-10 round-off; smaller gaps are noise
GRAD_CHECK_ATOL = 1e-8


def _worst_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest per-entry relative error, ignoring entries that agree to within
    the finite-difference noise floor (e.g. gradients that are exactly zero)."""
    if not analytic.size:
        return 0.0
    diff = np.abs(analytic - numeric)
    rel = diff / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.where(diff <= GRAD_CHECK_ATOL, 0.0, rel)))


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor | np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients of
    scalar ``f`` at ``x``: ``|a - n| / max(1e-8, |a| + |n|)``, skipping
    entries with ``|a - n| <= GRAD_CHECK_ATOL``."""
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=DTYPE)
    probe = Tensor(base.copy(), requires_grad=True)
    out = f(probe)
    backward(out)
    analytic = np.zeros_like(base) if probe.grad is None else probe.grad
    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(Tensor(base.copy())).item()
        flat[i] = orig - eps
        lo = f(Tensor(base.copy())).item()
        flat[i] = orig
        numeric.reshape(-1)[i] = (hi - lo) / (2 * eps)
    return _worst_rel_error(analytic, numeric)


# ---------------------------------------------------------------------------
# parameters, initialisation, optimisers

def glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_out, fan_in = shape[0], int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


@dataclass
class ParameterStore:
    params: dict[str, Tensor] = field(default_factory=dict)
    state: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    step_count: int = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=DTYPE), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self) -> int:
        return len(self.params)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def scale_grads(self, factor: float) -> None:
        for t in self.params.values():
            if t.grad is not None:
                t.grad *= factor

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            if name not in arrays:
                raise ContractError(f"checkpoint lacks parameter {name!r}")
            if arrays[name].shape != t.shape:
                raise DimensionError(f"{name}: checkpoint shape {arrays[name].shape} != {t.shape}")
            t.data = np.array(arrays[name], dtype=DTYPE)


@dataclass(frozen=True)
class SGD:
    lr: float


@dataclass(frozen=True)
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def optimizer_step(store: ParameterStore, spec: SGD | Adam, allow_missing: bool = True) -> None:
    """Apply one update and zero all grads.

    Parameters that took no part in the loss have ``grad is None``; they are
    skipped unless ``allow_missing`` is False, in which case that is an error.
    """
    if not allow_missing:
        missing = [k for k, t in store.params.items() if t.grad is None]
        if missing:
            raise ContractError(f"no gradient for {missing}")
    store.step_count += 1
    n = store.step_count
    for name, t in store.params.items():
        g = t.grad
        if g is None:
            continue
        if isinstance(spec, SGD):
            t.data = t.data - spec.lr * g
        else:
            st = store.state.setdefault(name, {"m": np.zeros_like(t.data), "v": np.zeros_like(t.data)})
            st["m"] = spec.beta1 * st["m"] + (1 - spec.beta1) * g
            st["v"] = spec.beta2 * st["v"] + (1 - spec.beta2) * g * g
            m_hat = st["m"] / (1 - spec.beta1 ** n)
            v_hat = st["v"] / (1 - spec.beta2 ** n)
            t.data = t.data - spec.lr * m_hat / (np.sqrt(v_hat) + spec.eps)
    store.zero_grad()


# ---------------------------------------------------------------------------
# checkpoint format
#
#   magic   8 bytes  b"ONCTNS01"
#   count   uint32
#   per tensor:
#     name_len uint32, name utf-8 bytes
#     ndim     uint32, dims uint64 * ndim
#     data     float64 * prod(dims), row-major
#
# All integers and doubles little-endian.

MAGIC = b"ONCTNS01"


def save_tensors(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a tensor checkpoint")
    pos = 8
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{ndim}Q", blob, pos)
        pos += 8 * ndim
        size = int(np.prod(dims)) if ndim else 1
        out[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(dims).astype(DTYPE)
        pos += 8 * size
    return out


def grad_check_params(f: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-5) -> float:
    """Like :func:`grad_check` but perturbs parameter tensors in place; ``f``
    rebuilds the graph from them on every call."""
    params = list(params)
    for p in params:
        p.grad = None
    backward(f())
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f().item()
            flat[i] = orig - eps
            lo = f().item()
            flat[i] = orig
            numeric.reshape(-1)[i] = (hi - lo) / (2 * eps)
        worst = max(worst, _worst_rel_error(analytic, numeric))
        p.grad = None
    return worst

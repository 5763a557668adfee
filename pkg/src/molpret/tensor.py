"""Dense arrays with reverse-mode automatic differentiation.

Just enough machinery for the message-passing network and its readout
heads: float32 storage by default (float64 available for gradient
checking), 64-bit accumulation inside reductions, and a Tape that records
primitive operations in execution order and replays their adjoints in
reverse.  Tapes are tracked per thread, so independent forward/backward
passes may run concurrently on separate threads.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import NumericError

_LOCAL = threading.local()


def _active_tape():
    stack = getattr(_LOCAL, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    """A dense array, optionally participating in differentiation."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


class Tape:
    """Execution-ordered record of primitives for one backward pass.

    Gradients accumulate additively; traversal is the exact reverse of the
    recording order, which is a valid reverse topological order because
    every operation is recorded after its inputs exist.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_LOCAL, "stack", None)
        if stack is None:
            stack = _LOCAL.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _LOCAL.stack.pop()
        return False

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
        self._nodes.append((out, inputs, backward))

    def gradients(self, loss: Tensor, params) -> list[np.ndarray]:
        """Backpropagate from a scalar loss; returns one gradient array per
        parameter (zeros for parameters the loss does not depend on)."""
        if loss.data.shape != ():
            raise ValueError("backward pass needs a scalar loss")
        grads: dict[int, np.ndarray] = {id(loss): np.asarray(1.0, dtype=loss.dtype)}
        for out, inputs, backward in reversed(self._nodes):
            g_out = grads.get(id(out))
            if g_out is None:
                continue
            for inp, g in zip(inputs, backward(g_out)):
                if g is None or not inp.requires_grad:
                    continue
                g = np.asarray(g, dtype=inp.dtype)
                acc = grads.get(id(inp))
                grads[id(inp)] = g if acc is None else acc + g
        out_list = []
        for p in params:
            g = grads.get(id(p))
            if g is None:
                g = np.zeros_like(p.data)
            p.grad = g
            out_list.append(g)
        return out_list


def _make(data, inputs: tuple[Tensor, ...], backward) -> Tensor:
    tape = _active_tape()
    tracked = tape is not None and any(i.requires_grad for i in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = tracked
    out.grad = None
    if tracked:
        tape._record(out, inputs, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return (_unbroadcast(g, a.data.shape),
                _unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)

    def backward(g):
        return (g * (a.data > 0),)

    return _make(out, (a,), backward)


def tsum(a: Tensor) -> Tensor:
    """Full reduction; accumulated in float64."""
    out = np.asarray(a.data.sum(dtype=np.float64))

    def backward(g):
        return (np.full(a.data.shape, float(g), dtype=a.dtype),)

    return _make(out, (a,), backward)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    out = np.asarray(a.data.sum(dtype=np.float64) / n)

    def backward(g):
        return (np.full(a.data.shape, float(g) / n, dtype=a.dtype),)

    return _make(out, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        pieces = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        return tuple(pieces)

    return _make(out, tensors, backward)


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError("gather_rows index out of range")
    out = a.data[idx]

    def backward(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        return (acc,)

    return _make(out, (a,), backward)


def scatter_add_rows(src: Tensor, idx, n_rows: int) -> Tensor:
    """Sum source rows into ``n_rows`` destination rows by index; the
    message-aggregation primitive."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape[0] != src.data.shape[0]:
        raise ValueError("one destination index per source row required")
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise IndexError("scatter_add_rows index out of range")
    out = np.zeros((n_rows,) + src.data.shape[1:], dtype=src.dtype)
    np.add.at(out, idx, src.data)

    def backward(g):
        return (g[idx],)

    return _make(out, (src,), backward)


def mse_masked(pred: Tensor, target, mask) -> Tensor:
    """Mean squared error over cells where ``mask`` is true; 0 when the
    mask is empty.  ``target`` and ``mask`` are constants."""
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if target.shape != pred.data.shape or mask.shape != pred.data.shape:
        raise ValueError("mse_masked operands must share one shape")
    n_valid = int(mask.sum())
    diff = np.where(mask, pred.data.astype(np.float64) - target, 0.0)
    value = np.asarray((diff * diff).sum() / n_valid if n_valid else 0.0)

    def backward(g):
        if n_valid == 0:
            return (np.zeros_like(pred.data),)
        return ((2.0 * float(g) / n_valid) * diff,)

    return _make(value, (pred,), backward)


def bce_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy on logits, numerically stable."""
    z = np.asarray(labels, dtype=np.float64)
    if z.shape != logits.data.shape:
        raise ValueError("bce_with_logits operands must share one shape")
    x = logits.data.astype(np.float64)
    n = x.size
    per = np.maximum(x, 0) - x * z + np.log1p(np.exp(-np.abs(x)))
    value = np.asarray(per.sum() / n)

    def backward(g):
        sig = 1.0 / (1.0 + np.exp(-x))
        return ((float(g) / n) * (sig - z),)

    return _make(value, (logits,), backward)


# ---------------------------------------------------------------------------
# verification and optimization
# ---------------------------------------------------------------------------

def grad_check(f, x: Tensor, eps: float = 1e-4) -> float:
    """Compare the taped gradient of a scalar function against central
    finite differences; returns the worst relative disagreement."""
    with Tape() as tape:
        out = f(x)
        if out.data.shape != ():
            raise ValueError("grad_check needs a scalar-valued function")
        g_ad = tape.gradients(out, [x])[0].astype(np.float64)

    flat = x.data.reshape(-1)
    g_fd = np.zeros(flat.size, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(f(x).data)
        flat[i] = orig - eps
        f_minus = float(f(x).data)
        flat[i] = orig
        g_fd[i] = (f_plus - f_minus) / (2.0 * eps)
    g_fd = g_fd.reshape(x.data.shape)
    err = np.abs(g_ad - g_fd) / (np.abs(g_ad) + np.abs(g_fd) + 1e-8)
    return float(err.max()) if err.size else 0.0


def adam_init(params) -> dict:
    return {
        "step": 0,
        "m": [np.zeros_like(p.data) for p in params],
        "v": [np.zeros_like(p.data) for p in params],
    }


def adam_step(params, grads, state: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> dict:
    """In-place Adam update with bias correction.

    Aborts with :class:`NumericError` on non-finite gradients or if an
    update would leave a parameter non-finite.
    """
    for i, g in enumerate(grads):
        if not np.isfinite(g).all():
            raise NumericError(
                f"non-finite gradient for parameter {i} "
                f"(max |g| = {np.abs(g[np.isfinite(g)]).max() if np.isfinite(g).any() else 'n/a'})")
    state["step"] += 1
    t = state["step"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state["m"][i]
        v = state["v"][i]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
        p.data -= update.astype(p.dtype)
        if not np.isfinite(p.data).all():
            raise NumericError(f"parameter {i} became non-finite after Adam step {t}")
    return state

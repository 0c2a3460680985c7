"""Minimal reverse-mode autodiff over small dense tensors, plus Adam.

The graph is define-by-run: every operation returns a new Tensor that
remembers its parents and a closure propagating the output gradient back
to them. `backward` walks the tape in reverse topological order and sums
gradient contributions over fan-out. All arrays are rank 1-3, row-major,
64-bit by default (`set_dtype` switches to 32-bit for speed at the cost
of looser gradient-check tolerances).

Gradient contracts per operation:
    matmul:   dA = G @ B^T,  dB = A^T @ G
    add:      identity on both sides (broadcast side sums over rows)
    mul:      dA = G * B,    dB = G * A  (broadcast side sums over rows)
    concat:   G splits back along the concatenation axis
    slice:    G scatters into the sliced region of a zero tensor
    tanh:     G * (1 - tanh(x)^2)
    sigmoid:  G * s * (1 - s)
    relu:     G * [x > 0]
    softmax cross-entropy (mean over rows): (softmax - onehot) / n

Any NaN/Inf appearing in a value or gradient raises NumericalError.
"""

import numpy as np

from .errors import NumericalError

_DTYPE = np.float64


def set_dtype(name: str) -> None:
    """Select the working precision: "float64" (default) or "float32"."""
    global _DTYPE
    if name not in ("float64", "float32"):
        raise ValueError(f"unsupported dtype {name!r}")
    _DTYPE = np.float64 if name == "float64" else np.float32


def get_dtype():
    return _DTYPE


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericalError(f"non-finite values produced by {what}")


class Tensor:
    """Dense real array participating in the differentiable graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _op="leaf"):
        arr = np.asarray(data, dtype=_DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim > 3:
            raise ValueError(f"rank {arr.ndim} tensor not supported (max 3)")
        _check_finite(arr, _op)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward = None
        self.op = _op

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def _result(data, parents, op, backward):
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents),
                 _parents=parents, _op=op)
    if out.requires_grad:
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray, op: str) -> None:
    # finiteness of gradients is verified once per backward pass, on the leaves
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g.reshape(t.data.shape))
    else:
        t.grad += g.reshape(t.data.shape)


def _is_row_broadcast(small: tuple, big: tuple) -> bool:
    # vector (n,) or (1, n) applied across the rows of an (m, n) matrix
    if len(big) != 2:
        return False
    if len(small) == 1:
        return small[0] == big[1]
    return len(small) == 2 and small[0] == 1 and small[1] == big[1]


def _binary_shapes(a: Tensor, b: Tensor, op: str):
    """Returns (out_shape, a_broadcast, b_broadcast) or raises on mismatch."""
    if a.shape == b.shape:
        return a.shape, False, False
    if _is_row_broadcast(b.shape, a.shape):
        return a.shape, False, True
    if _is_row_broadcast(a.shape, b.shape):
        return b.shape, True, False
    raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_broadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    # undo a row broadcast by summing the gradient over rows
    return g.sum(axis=0).reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _, a_bc, b_bc = _binary_shapes(a, b, "add")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _reduce_broadcast(g, a.shape) if a_bc else g, "add")
        if b.requires_grad:
            _accumulate(b, _reduce_broadcast(g, b.shape) if b_bc else g, "add")

    return _result(a.data + b.data, (a, b), "add", backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _, a_bc, b_bc = _binary_shapes(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            ga = g * b.data
            _accumulate(a, _reduce_broadcast(ga, a.shape) if a_bc else ga, "mul")
        if b.requires_grad:
            gb = g * a.data
            _accumulate(b, _reduce_broadcast(gb, b.shape) if b_bc else gb, "mul")

    return _result(a.data * b.data, (a, b), "mul", backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul: expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dimensions disagree, {a.shape} x {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T, "matmul")
        if b.requires_grad:
            _accumulate(b, a.data.T @ g, "matmul")

    return _result(a.data @ b.data, (a, b), "matmul", backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    rank = tensors[0].data.ndim
    if not 0 <= axis < rank:
        raise ValueError(f"concat: invalid axis {axis} for rank {rank}")
    for t in tensors[1:]:
        if t.data.ndim != rank:
            raise ValueError("concat: rank mismatch")
        for ax in range(rank):
            if ax != axis and t.shape[ax] != tensors[0].shape[ax]:
                raise ValueError(f"concat: shapes {tensors[0].shape} and {t.shape} "
                                 f"differ off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            index = [slice(None)] * rank
            index[axis] = slice(offset, offset + size)
            _accumulate(t, g[tuple(index)], "concat")
            offset += size

    return _result(np.concatenate([t.data for t in tensors], axis=axis),
                   tuple(tensors), "concat", backward)


def slice_axis(t: Tensor, axis: int, start: int, stop: int) -> Tensor:
    rank = t.data.ndim
    if not 0 <= axis < rank:
        raise ValueError(f"slice: invalid axis {axis} for rank {rank}")
    if not 0 <= start <= stop <= t.shape[axis]:
        raise ValueError(f"slice: range [{start}, {stop}) out of bounds for axis "
                         f"{axis} of shape {t.shape}")
    index = [slice(None)] * rank
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(t.data)
        full[index] = g
        _accumulate(t, full, "slice")

    return _result(t.data[index].copy(), (t,), "slice", backward)


def tanh(t: Tensor) -> Tensor:
    out_data = np.tanh(t.data)

    def backward(g):
        _accumulate(t, g * (1.0 - out_data * out_data), "tanh")

    return _result(out_data, (t,), "tanh", backward)


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    # clipping keeps exp in range; sigmoid saturates to 0/1 well before +-700
    return 1.0 / (1.0 + np.exp(-np.clip(x, -700.0, 700.0)))


def sigmoid(t: Tensor) -> Tensor:
    out_data = _sigmoid_stable(t.data)

    def backward(g):
        _accumulate(t, g * out_data * (1.0 - out_data), "sigmoid")

    return _result(out_data, (t,), "sigmoid", backward)


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0

    def backward(g):
        _accumulate(t, g * mask, "relu")

    return _result(np.where(mask, t.data, 0.0), (t,), "relu", backward)


def tensor_sum(t: Tensor) -> Tensor:
    def backward(g):
        _accumulate(t, np.full_like(t.data, float(g.reshape(-1)[0])), "sum")

    return _result(np.array([t.data.sum()]), (t,), "sum", backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a 2-D array, stabilized by max subtraction."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean over rows of -log softmax(logits)[i, targets[i]]; scalar output."""
    if logits.data.ndim != 2:
        raise ValueError(f"softmax_cross_entropy: logits must be rank 2, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    n, n_classes = logits.shape
    if targets.shape != (n,):
        raise ValueError(f"softmax_cross_entropy: {n} rows but targets shape {targets.shape}")
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= n_classes:
        raise ValueError(f"softmax_cross_entropy: target outside [0, {n_classes})")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    loss = -log_probs[np.arange(n), targets].mean()

    def backward(g):
        scale = float(g.reshape(-1)[0]) / n
        grad = np.exp(log_probs)
        grad[np.arange(n), targets] -= 1.0
        _accumulate(logits, grad * scale, "softmax_cross_entropy")

    return _result(np.array([loss]), (logits,), "softmax_cross_entropy", backward)


def topological_order(root: Tensor) -> list:
    """Nodes of the graph below `root`, parents before consumers."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from `loss`."""
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = topological_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if node.requires_grad and not node._parents and node.grad is not None:
            _check_finite(node.grad, "backward pass (leaf gradient)")


class Adam:
    """Adam optimizer with bias correction over a fixed parameter list.

    Update per step t (incremented first):
        m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
        m_hat = m/(1-b1^t)          v_hat = v/(1-b2^t)
        theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        if not all(0.0 < b < 1.0 for b in (beta1, beta2)):
            raise ValueError(f"betas must lie in (0,1), got {beta1}, {beta2}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NumericalError("NaN/Inf gradient passed to Adam step")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most `max_norm`."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


def grad_check(fn, tensors, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `fn` rebuilds and returns the scalar loss; `tensors` are the leaves to
    check. Relative error per coordinate is |a - n| / max(1, |a|, |n|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for t in tensors:
        t.grad = None
    backward(fn())
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]
    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = fn().item()
            flat[i] = orig - eps
            f_minus = fn().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(1.0, abs(a_flat[i]), abs(numeric))
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst

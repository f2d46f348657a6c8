"""A small reverse-mode gradient engine on dense float64 numpy arrays.

Operations are recorded on the innermost active :class:`Tape`; outside a tape
they simply compute values, so the same layer code runs for inference and for
training. Every primitive also accepts plain arrays and then returns a plain
array, which lets the numerical modules stay agnostic of the engine.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

_TAPES: list["Tape"] = []


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __array_ufunc__ = None  # make ndarray @ Tensor defer to Tensor.__rmatmul__

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=float)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def zero_grad(self):
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __rsub__(self, other):
        return add(other, scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return hadamard(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1.0 / float(other))
        return divide(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Tape:
    """Ordered record of operations; ``backward`` walks it once in reverse."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple, Callable]] = []
        self._done = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def record(self, out: Tensor, inputs: tuple, backward: Callable):
        self.records.append((out, inputs, backward))

    def backward(self, loss: Tensor, seed: np.ndarray | None = None):
        if self._done:
            raise RuntimeError("backward already ran on this tape")
        self._done = True
        loss.grad = np.ones_like(loss.value) if seed is None else np.asarray(seed, dtype=float)
        for out, inputs, fn in reversed(self.records):
            if out.grad is None:
                continue
            grads = fn(out.grad)
            for inp, g in zip(inputs, grads):
                if g is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                    continue
                g = _unbroadcast(np.asarray(g, dtype=float), inp.shape)
                inp.grad = g if inp.grad is None else inp.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _val(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=float)


def _is_t(*xs) -> bool:
    return any(isinstance(x, Tensor) for x in xs)


def _finite(v: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"non-finite value produced by {op}")
    return v


def _make(value: np.ndarray, inputs: tuple, backward: Callable, op: str) -> Tensor:
    value = _finite(value, op)
    needs = any(isinstance(x, Tensor) and x.requires_grad for x in inputs)
    out = Tensor(value, requires_grad=needs)
    if needs and _TAPES:
        _TAPES[-1].record(out, inputs, backward)
    return out


def _swap(a):
    return np.swapaxes(a, -1, -2)


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {av.shape} and {bv.shape}")
    try:
        v = np.matmul(av, bv)
    except ValueError as e:
        raise ShapeError(f"matmul shape mismatch {av.shape} @ {bv.shape}") from e
    if not _is_t(a, b):
        return v
    return _make(v, (a, b), lambda g: (g @ _swap(bv), _swap(av) @ g), "matmul")


def transpose(a):
    """Swap the last two axes."""
    v = _swap(_val(a))
    if not _is_t(a):
        return v
    return _make(v, (a,), lambda g: (_swap(g),), "transpose")


def _bcast(av, bv, op):
    try:
        np.broadcast_shapes(av.shape, bv.shape)
    except ValueError as e:
        raise ShapeError(f"{op}: incompatible shapes {av.shape} and {bv.shape}") from e


def add(a, b):
    av, bv = _val(a), _val(b)
    _bcast(av, bv, "add")
    v = av + bv
    if not _is_t(a, b):
        return v
    return _make(v, (a, b), lambda g: (g, g), "add")


def scale(a, c: float):
    v = _val(a) * c
    if not _is_t(a):
        return v
    return _make(v, (a,), lambda g: (g * c,), "scale")


def hadamard(a, b):
    av, bv = _val(a), _val(b)
    _bcast(av, bv, "hadamard")
    v = av * bv
    if not _is_t(a, b):
        return v
    return _make(v, (a, b), lambda g: (g * bv, g * av), "hadamard")


def divide(a, b):
    av, bv = _val(a), _val(b)
    _bcast(av, bv, "divide")
    v = av / bv
    if not _is_t(a, b):
        return v
    return _make(v, (a, b), lambda g: (g / bv, -g * av / bv**2), "divide")


def concat(xs: Sequence, axis: int = -1):
    vals = [_val(x) for x in xs]
    try:
        v = np.concatenate(vals, axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: incompatible shapes {[x.shape for x in vals]}") from e
    if not _is_t(*xs):
        return v
    bounds = np.cumsum([x.shape[axis] for x in vals])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(v, tuple(xs), back, "concat")


def slice_(a, idx):
    av = _val(a)
    v = av[idx]
    if not _is_t(a):
        return v

    def back(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return (out,)

    return _make(np.array(v), (a,), back, "slice")


def reshape(a, shape):
    av = _val(a)
    v = av.reshape(shape)
    if not _is_t(a):
        return v
    return _make(v, (a,), lambda g: (g.reshape(av.shape),), "reshape")


def gather(a, idx):
    """Per-batch row selection: out[b, k] = a[b, idx[b, k]]."""
    av = _val(a)
    idx = np.asarray(idx, dtype=int)
    if idx.ndim != 2 or idx.shape[0] != av.shape[0]:
        raise ShapeError(f"gather: index shape {idx.shape} incompatible with {av.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= av.shape[1]):
        raise IndexError("gather index out of range")
    rows = np.arange(av.shape[0])[:, None]
    v = av[rows, idx]
    if not _is_t(a):
        return v

    def back(g):
        out = np.zeros_like(av)
        np.add.at(out, (rows, idx), g)
        return (out,)

    return _make(v, (a,), back, "gather")


def sum_(a, axis=None, keepdims=False):
    av = _val(a)
    v = np.sum(av, axis=axis, keepdims=keepdims)
    if not _is_t(a):
        return v

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape),)

    return _make(np.asarray(v), (a,), back, "sum")


def mean(a, axis=None, keepdims=False):
    av = _val(a)
    n = av.size if axis is None else np.prod([av.shape[ax] for ax in np.atleast_1d(axis)])
    return scale(sum_(a, axis, keepdims), 1.0 / n)


def elu(a):
    av = _val(a)
    neg = np.expm1(np.minimum(av, 0.0))
    v = np.where(av > 0, av, neg)
    if not _is_t(a):
        return v
    return _make(v, (a,), lambda g: (g * np.where(av > 0, 1.0, neg + 1.0),), "elu")


def relu(a):
    av = _val(a)
    v = np.maximum(av, 0.0)
    if not _is_t(a):
        return v
    return _make(v, (a,), lambda g: (g * (av > 0),), "relu")


def sigmoid(a):
    av = _val(a)
    v = 0.5 * (1.0 + np.tanh(0.5 * av))
    if not _is_t(a):
        return v
    return _make(v, (a,), lambda g: (g * v * (1.0 - v),), "sigmoid")


def identity(a):
    return a


def safe_norm(a, axis: int = -1, keepdims: bool = True, eps: float = 1e-12):
    """sqrt(sum a^2 + eps^2): smooth, with zero gradient at the origin."""
    av = _val(a)
    v = np.sqrt(np.sum(av * av, axis=axis, keepdims=True) + eps * eps)
    out = v if keepdims else np.squeeze(v, axis=axis)
    if not _is_t(a):
        return out

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * av / v,)

    return _make(out, (a,), back, "safe_norm")


def softmax_cross_entropy(logits, labels) -> Tensor | float:
    """Mean cross-entropy of integer labels under softmax(logits); logits (B, C)."""
    z = _val(logits)
    labels = np.asarray(labels, dtype=int)
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ShapeError(f"logits {z.shape} vs labels {labels.shape}")
    zs = z - z.max(axis=1, keepdims=True)
    logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    b = z.shape[0]
    loss = -logp[np.arange(b), labels].mean()
    if not _is_t(logits):
        return float(loss)

    def back(g):
        p = np.exp(logp)
        p[np.arange(b), labels] -= 1.0
        return (g * p / b,)

    return _make(np.asarray(loss), (logits,), back, "softmax_cross_entropy")


ACTIVATIONS: dict[str, Callable] = {
    "elu": elu,
    "relu": relu,
    "sigmoid": sigmoid,
    "identity": identity,
}


def activation(sigma) -> Callable:
    if callable(sigma):
        return sigma
    try:
        return ACTIVATIONS[sigma]
    except KeyError:
        raise ValueError(f"unsupported activation {sigma!r}; choose from {sorted(ACTIVATIONS)}") from None


def gradient_check(
    f: Callable[..., Tensor],
    x: Tensor | Sequence[Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between taped gradients and central differences.

    ``f`` maps the tensor(s) to a scalar Tensor. The error per coordinate is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). ``max_coords``
    limits how many coordinates per tensor are probed (chosen by ``rng``).
    """
    xs = [x] if isinstance(x, Tensor) else list(x)
    for t in xs:
        t.value = np.ascontiguousarray(t.value)
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        out = f(*xs) if not isinstance(x, Tensor) else f(x)
    tape.backward(out)
    analytic = [np.zeros_like(t.value) if t.grad is None else t.grad.copy() for t in xs]
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for t, ga in zip(xs, analytic):
        flat = t.value.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(_val(f(*xs) if not isinstance(x, Tensor) else f(x)))
            flat[i] = orig - h
            fm = float(_val(f(*xs) if not isinstance(x, Tensor) else f(x)))
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            an = ga.reshape(-1)[i]
            err = abs(an - num) / max(abs(an), abs(num), 1e-8)
            worst = max(worst, err)
    return worst


def adam_step(params, grads, state: dict | None, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update. Returns (new_params, new_state)."""
    if state is None:
        state = {"t": 0, "m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}
    t = state["t"] + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if p.shape != g.shape:
            raise ShapeError(f"parameter {p.shape} vs gradient {g.shape}")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        new_p.append(p - lr * mhat / (np.sqrt(vhat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, {"t": t, "m": new_m, "v": new_v}


class Adam:
    """Adam over a list of leaf Tensors, updated in place."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, **kw):
        self.params = list(params)
        self.lr = lr
        self.kw = kw
        self.state = None

    def step(self):
        grads = [np.zeros_like(p.value) if p.grad is None else p.grad for p in self.params]
        new, self.state = adam_step([p.value for p in self.params], grads, self.state, self.lr, **self.kw)
        for p, v in zip(self.params, new):
            p.value = v

    def zero_grad(self):
        for p in self.params:
            p.grad = None

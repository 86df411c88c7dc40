"""Minimal dense reverse-mode autodiff over rank-2 float64 arrays.

Every op takes an optional ``tape``. When a tape is given and any input
requires a gradient, the op appends a node holding its inputs, its output
and a local backward rule. ``Tape.backward`` walks those nodes in reverse
and accumulates into ``Parameter.grad``. Without a tape the ops are plain
numpy evaluations, which is what inference and evaluation use.

Tensors are ``(rows, cols)``; a batch of samples is stored column-wise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from fanlab.errors import ContractError, DimensionError, NonFiniteError

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim > 2:
            raise DimensionError(f"tensors are rank <= 2, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Trainable leaf tensor with a gradient buffer of the same shape."""

    __slots__ = ("grad",)

    def __init__(self, data):
        super().__init__(data, requires_grad=True)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Record of one forward pass, replayed in reverse by ``backward``."""

    nodes: list[Node] = field(default_factory=list)

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss: Tensor) -> None:
        if loss.shape != (1, 1):
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if isinstance(loss, Parameter):
            loss.grad += 1.0
            return
        if not any(node.output is loss for node in self.nodes):
            raise ContractError("loss was not produced on this tape")

        grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        for node in reversed(self.nodes):
            upstream = grads.pop(id(node.output), None)
            if upstream is None:
                continue
            for inp, g in zip(node.inputs, node.backward(upstream)):
                if g is None or not inp.requires_grad:
                    continue
                if isinstance(inp, Parameter):
                    inp.grad += g
                    continue
                key = id(inp)
                prev = grads.get(key)
                grads[key] = g if prev is None else prev + g


def backward(loss: Tensor, tape: Tape) -> None:
    tape.backward(loss)


def _emit(op, tape, out_data, inputs, rule):
    if not np.all(np.isfinite(out_data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = any(t.requires_grad for t in inputs)
    if tape is not None and out.requires_grad:
        tape.nodes.append(Node(op, tuple(inputs), out, rule))
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.cols != b.rows:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    A, B = a.data, b.data
    return _emit("matmul", tape, A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))


def add_bias(x: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if b.shape != (x.rows, 1):
        raise DimensionError(f"bias shape {b.shape} does not fit input {x.shape}")
    return _emit("add_bias", tape, x.data + b.data, (x, b),
                 lambda g: (g, g.sum(axis=1, keepdims=True)))


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add shapes differ: {a.shape} vs {b.shape}")
    return _emit("add", tape, a.data + b.data, (a, b), lambda g: (g, g))


def concat_rows(parts: Sequence[Tensor], tape: Tape | None = None) -> Tensor:
    if not parts:
        raise DimensionError("concat_rows needs at least one part")
    cols = parts[0].cols
    if any(p.cols != cols for p in parts):
        raise DimensionError(f"concat_rows column counts differ: {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.rows for p in parts])

    def rule(g):
        return [g[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]

    return _emit("concat_rows", tape, np.concatenate([p.data for p in parts], axis=0),
                 tuple(parts), rule)


def slice_rows(x: Tensor, start: int, stop: int, tape: Tape | None = None) -> Tensor:
    if not 0 <= start <= stop <= x.rows:
        raise DimensionError(f"row slice [{start}:{stop}] out of range for {x.shape}")

    def rule(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        return (full,)

    return _emit("slice_rows", tape, x.data[start:stop].copy(), (x,), rule)


def _elementwise(name: str, fn, dfn):
    def op(x: Tensor, tape: Tape | None = None) -> Tensor:
        X = x.data
        return _emit(name, tape, fn(X), (x,), lambda g: (g * dfn(X),))

    op.__name__ = name
    return op


def _gelu(x):
    return x * ndtr(x)


def _gelu_grad(x):
    return ndtr(x) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


cos_elem = _elementwise("cos", np.cos, lambda x: -np.sin(x))
sin_elem = _elementwise("sin", np.sin, np.cos)
gelu_elem = _elementwise("gelu", _gelu, _gelu_grad)
relu_elem = _elementwise("relu", lambda x: np.maximum(x, 0.0), lambda x: (x > 0).astype(np.float64))
sigmoid_elem = _elementwise("sigmoid", _sigmoid, lambda x: _sigmoid(x) * (1.0 - _sigmoid(x)))
snake_elem = _elementwise("snake", lambda x: x + np.sin(x) ** 2, lambda x: 1.0 + np.sin(2.0 * x))
one_minus = _elementwise("one_minus", lambda x: 1.0 - x, lambda x: -np.ones_like(x))


def scale(x: Tensor, s, tape: Tape | None = None) -> Tensor:
    """Multiply every element of ``x`` by a scalar or a 1x1 tensor."""
    if not isinstance(s, Tensor):
        s = float(s)
        return _emit("scale", tape, x.data * s, (x,), lambda g: (g * s,))
    if s.shape != (1, 1):
        raise DimensionError(f"scale factor must be 1x1, got {s.shape}")
    X, S = x.data, s.data[0, 0]
    return _emit("scale", tape, X * S, (x, s),
                 lambda g: (g * S, np.array([[np.sum(X * g)]])))


def sum_all(x: Tensor, tape: Tape | None = None) -> Tensor:
    shape = x.shape
    return _emit("sum_all", tape, np.array([[x.data.sum()]]), (x,),
                 lambda g: (np.full(shape, g[0, 0]),))


def mse_loss(pred: Tensor, target, tape: Tape | None = None) -> Tensor:
    target = _as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    return _emit("mse_loss", tape, np.array([[np.mean(diff * diff)]]), (pred, target),
                 lambda g: (g[0, 0] * 2.0 / n * diff, -g[0, 0] * 2.0 / n * diff))


def _central_difference(evaluate, arr: np.ndarray, eps: float) -> np.ndarray:
    numeric = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + eps
        up = evaluate()
        arr[idx] = orig - eps
        down = evaluate()
        arr[idx] = orig
        numeric[idx] = (up - down) / (2.0 * eps)
    return numeric


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


def gradcheck(f: Callable[[Tensor, Tape | None], Tensor], x, eps: float = 1e-5) -> float:
    """Max relative error between the taped gradient of ``f`` at ``x`` and
    central differences. ``f(x, tape)`` must return a 1x1 tensor."""
    if not 0.0 < eps <= 1e-3:
        raise ContractError(f"eps must lie in (0, 1e-3], got {eps}")
    p = Parameter(x.data if isinstance(x, Tensor) else x)
    tape = Tape()
    tape.backward(f(p, tape))
    probe = Tensor(p.data)
    numeric = _central_difference(lambda: f(probe, None).item(), probe.data, eps)
    return _relative_error(p.grad, numeric)


def gradcheck_parameters(f: Callable[[Tape | None], Tensor], params: Sequence[Parameter],
                         eps: float = 1e-5) -> float:
    """Like ``gradcheck`` but differentiates ``f(tape)`` w.r.t. existing parameters,
    perturbing them in place (values are restored afterwards)."""
    if not 0.0 < eps <= 1e-3:
        raise ContractError(f"eps must lie in (0, 1e-3], got {eps}")
    for p in params:
        p.zero_grad()
    tape = Tape()
    tape.backward(f(tape))
    worst = 0.0
    for p in params:
        numeric = _central_difference(lambda: f(None).item(), p.data, eps)
        worst = max(worst, _relative_error(p.grad, numeric))
    return worst

"""Dense float64 tensors with reverse-mode gradients, plus the optimizer.

Every op builds a node holding its numpy result, its parents and a closure
mapping the output gradient to parent gradients. ``Tensor.backward`` walks
the graph in a deterministic reverse topological order.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    pass


def _as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=DTYPE)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    # construction helper used by every op
    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in reversed(node._parents):
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # leaf
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# elementwise -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    ad, bd = a.data, b.data
    return Tensor._make(
        ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape))
    )


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return Tensor._make(out, (a, b), back)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor._make(np.log(xd), (x,), lambda g: (g / xd,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._make(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor._make(out, (x,), lambda g: (g * out * (1.0 - out),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    xd = x.data
    x2 = xd * xd
    t = x2 * (0.044715 * _GELU_C)
    t += _GELU_C
    t *= xd
    np.tanh(t, out=t)
    out = t + 1.0
    out *= xd
    out *= 0.5

    def back(g):
        # d/dx = 0.5 (1 + t) + 0.5 x (1 - t^2) C (1 + 3 * 0.044715 x^2)
        d = x2 * (3 * 0.044715 * _GELU_C)
        d += _GELU_C
        d *= xd
        s = t * t
        np.subtract(1.0, s, out=s)
        s *= d
        s += t
        s += 1.0
        s *= 0.5
        s *= g
        return (s,)

    return Tensor._make(out, (x,), back)


# shape ops ----------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return Tensor._make(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor._make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(x: Tensor, idx) -> Tensor:
    src = x.shape
    basic = _is_basic_index(idx)

    def back(g):
        full = np.zeros(src, dtype=DTYPE)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return Tensor._make(x.data[idx], (x,), back)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        out = []
        for k in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[k], bounds[k + 1])
            out.append(g[tuple(sl)])
        return tuple(out)

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def pad(x: Tensor, widths) -> Tensor:
    """Zero padding; ``widths`` as for ``np.pad``."""
    sl = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))
    return Tensor._make(np.pad(x.data, widths), (x,), lambda g: (g[sl],))


def roll(x: Tensor, shift, axis) -> Tensor:
    if isinstance(shift, int):
        back_shift = -shift
    else:
        back_shift = tuple(-s for s in shift)
    return Tensor._make(
        np.roll(x.data, shift, axis=axis), (x,), lambda g: (np.roll(g, back_shift, axis=axis),)
    )


def take_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Embedding lookup ``table[ids]`` along the first axis."""
    ids = np.asarray(ids)
    src = table.shape

    def back(g):
        d = src[-1]
        flat = (ids.reshape(-1, 1) * d + np.arange(d)).reshape(-1)
        full = np.bincount(flat, weights=g.reshape(-1), minlength=src[0] * d)
        return (full.reshape(src),)

    return Tensor._make(table.data[ids], (table,), back)


# reductions ------------------------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = x.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return Tensor._make(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), back)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis, keepdims) * (1.0 / n)


# contractions ---------------------------------------------------------------

_EINSUM_PATHS: dict = {}


def _einsum(spec: str, *arrays: np.ndarray) -> np.ndarray:
    key = (spec, tuple(a.shape for a in arrays))
    path = _EINSUM_PATHS.get(key)
    if path is None:
        path = np.einsum_path(spec, *arrays, optimize="optimal")[0]
        _EINSUM_PATHS[key] = path
    return np.einsum(spec, *arrays, optimize=path)


def _expand_ellipsis(subs, output, operands):
    used = set("".join(subs) + output)
    free = [c for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ" if c not in used]
    n_ell = max(op.ndim - (len(s) - 3) for s, op in zip(subs, operands) if "..." in s)
    letters = "".join(free[:n_ell])
    new_subs = []
    for s, op in zip(subs, operands):
        if "..." in s:
            k = op.ndim - (len(s) - 3)
            s = s.replace("...", letters[n_ell - k :])
        new_subs.append(s)
    return new_subs, output.replace("...", letters)


def einsum(spec: str, *operands: Tensor) -> Tensor:
    """Einstein summation over distinct-index operands.

    Every index of an operand must also appear in the output or another
    operand; that holds for all contractions used here.
    """
    inputs, output = spec.replace(" ", "").split("->")
    subs = inputs.split(",")
    if len(subs) != len(operands):
        raise DimensionError(f"einsum '{spec}' expects {len(subs)} operands, got {len(operands)}")
    if "..." in spec:
        subs, output = _expand_ellipsis(subs, output, operands)
        spec = ",".join(subs) + "->" + output
    arrays = [o.data for o in operands]

    def back(g):
        grads = []
        for k, op in enumerate(operands):
            if not op.requires_grad:
                grads.append(None)
                continue
            others = [subs[j] for j in range(len(subs)) if j != k]
            other_arrays = [arrays[j] for j in range(len(subs)) if j != k]
            gspec = ",".join([output] + others) + "->" + subs[k]
            grads.append(_einsum(gspec, g, *other_arrays))
        return tuple(grads)

    return Tensor._make(_einsum(spec, *arrays), operands, back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched ``a @ b`` over matching leading axes."""
    ad, bd = a.data, b.data
    if ad.shape[:-2] != bd.shape[:-2] or ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {ad.shape} and {bd.shape}")

    def back(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return Tensor._make(ad @ bd, (a, b), back)


def linear_forward(x: Tensor, weight, bias=None) -> Tensor:
    """``x @ W + b`` over the trailing axis of ``x``."""
    w = weight.value if isinstance(weight, Parameter) else weight
    b = bias.value if isinstance(bias, Parameter) else bias
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: input shape {x.shape} incompatible with weight shape {w.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd
    parents = [x, w]
    if b is not None:
        if b.shape != (w.shape[1],):
            raise DimensionError(f"linear: bias shape {b.shape} does not match weight shape {w.shape}")
        out = out + b.data
        parents.append(b)

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.reshape(-1, xd.shape[-1]).T @ g2 if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return Tensor._make(out, parents, back)


# normalisation / probabilities --------------------------------------------


def _softmax_array(x: np.ndarray, axis: int) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.shape[axis] == 0:
        raise DimensionError("softmax over an empty axis")
    out = _softmax_array(x.data, axis)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (x,), back)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.shape[axis] == 0:
        raise DimensionError("log_softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def back(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return Tensor._make(out, (x,), back)


def cross_entropy(
    logits: Tensor,
    targets,
    weights: np.ndarray | None = None,
    denom: float | None = None,
) -> Tensor:
    """Mean of ``-log softmax(logits)[target]`` over rows.

    ``logits`` is ``(..., k)``; ``targets`` holds one class index per row.
    Optional per-row ``weights`` scale each term; ``denom`` overrides the
    row count used for the mean.
    """
    k = logits.shape[-1]
    flat = reshape(logits, (-1, k))
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.shape[0] != flat.shape[0]:
        raise DimensionError(f"cross_entropy: {flat.shape[0]} rows but {t.shape[0]} targets")
    if t.size and (t.min() < 0 or t.max() >= k):
        raise IndexError(f"cross_entropy: target out of range [0, {k})")
    if t.size == 0:
        return Tensor(0.0)
    lp = log_softmax(flat, axis=-1)
    rows = np.arange(t.shape[0])
    w = np.ones(t.shape[0], dtype=DTYPE) if weights is None else np.asarray(weights, dtype=DTYPE).reshape(-1)
    n = float(t.shape[0]) if denom is None else float(denom)
    lpd = lp.data
    val = -(w * lpd[rows, t]).sum() / n

    def back(g):
        full = np.zeros_like(lpd)
        full[rows, t] = -w * g / n
        return (full,)

    return Tensor._make(np.asarray(val), (lp,), back)


def layer_norm(x: Tensor, gain, bias, eps: float = 1e-5) -> Tensor:
    gain = gain.value if isinstance(gain, Parameter) else gain
    bias = bias.value if isinstance(bias, Parameter) else bias
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    out = xhat * gd + bias.data
    d = xd.shape[-1]

    def back(g):
        gxhat = g * gd
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True) - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, d)
        return gx, (flat * xhat.reshape(-1, d)).sum(axis=0), flat.sum(axis=0)

    return Tensor._make(out, (x, gain, bias), back)


# parameters -------------------------------------------------------------------


@dataclass
class Parameter:
    id: str
    value: Tensor

    @property
    def grad(self) -> np.ndarray | None:
        return self.value.grad

    @grad.setter
    def grad(self, g) -> None:
        self.value.grad = g

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def data(self) -> np.ndarray:
        return self.value.data


class ParameterStore:
    """Ordered, seeded collection of named parameters.

    Weights are drawn uniformly from ``[-init_scale, init_scale]``; biases
    start at zero. Creation order fixes iteration order, so two stores built
    by the same code with the same seed are identical.
    """

    def __init__(self, seed: int = 0, init_scale: float = 0.05):
        self.rng_seed = int(seed)
        self.init_scale = init_scale
        self._rng = np.random.default_rng(self.rng_seed)
        self.params: OrderedDict[str, Parameter] = OrderedDict()

    def create(self, pid: str, shape, init: str = "uniform") -> Parameter:
        if pid in self.params:
            raise KeyError(f"duplicate parameter id {pid!r}")
        shape = tuple(int(s) for s in shape)
        if init == "uniform":
            data = self._rng.uniform(-self.init_scale, self.init_scale, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        p = Parameter(pid, Tensor(data, requires_grad=True, name=pid))
        self.params[pid] = p
        return p

    def __getitem__(self, pid: str) -> Parameter:
        return self.params[pid]

    def __contains__(self, pid: str) -> bool:
        return pid in self.params

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self) -> int:
        return len(self.params)

    def num_values(self) -> int:
        return sum(p.value.data.size for p in self)

    def zero_grad(self) -> None:
        for p in self:
            p.value.grad = np.zeros_like(p.value.data)

    def clear_grad(self) -> None:
        for p in self:
            p.value.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((p.id, p.value.data.copy()) for p in self)

    def load_state_dict(self, state) -> None:
        for pid, arr in state.items():
            p = self.params[pid]
            arr = np.asarray(arr, dtype=DTYPE)
            if arr.shape != p.shape:
                raise DimensionError(f"{pid}: stored shape {arr.shape} != parameter shape {p.shape}")
            p.value.data = arr.copy()


@dataclass
class OptimizerState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(store: ParameterStore, state: OptimizerState) -> None:
    """One AdamW update in place; grads are zeroed afterwards."""
    for p in store:
        if p.grad is None:
            raise ValueError(f"adamw_step: parameter {p.id!r} has no gradient")
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p in store:
        g = p.grad
        m = state.m.get(p.id)
        if m is None:
            m = state.m[p.id] = np.zeros_like(g)
            state.v[p.id] = np.zeros_like(g)
        v = state.v[p.id]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        data = p.value.data
        if state.weight_decay:
            data *= 1.0 - state.lr * state.weight_decay
        data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.value.grad = np.zeros_like(data)


def grad_check(
    f: Callable[[ParameterStore], Tensor],
    store: ParameterStore,
    eps: float = 1e-5,
    floor: float = 1e-6,
    params: Iterable[str] | None = None,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``; the floor
    keeps entries whose true gradient is ~0 from dividing round-off noise.
    """
    store.clear_grad()
    out = f(store)
    if not np.isfinite(out.data).all():
        raise FloatingPointError("grad_check: objective is not finite")
    out.backward()
    worst = 0.0
    ids = list(params) if params is not None else [p.id for p in store]
    for pid in ids:
        p = store[pid]
        analytic = np.zeros(p.shape) if p.grad is None else p.grad.copy()
        data = p.value.data
        flat = data.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            fp = float(f(store).data)
            flat[k] = orig - eps
            fm = float(f(store).data)
            flat[k] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise FloatingPointError(f"grad_check: objective not finite perturbing {pid}[{k}]")
            num = (fp - fm) / (2 * eps)
            a = analytic.reshape(-1)[k]
            rel = abs(a - num) / max(abs(a), abs(num), floor)
            worst = max(worst, rel)
    store.clear_grad()
    return worst

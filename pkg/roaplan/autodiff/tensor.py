"""
Autodiff de modo reverso sobre arrays numpy em lote.

Operações sobre Tensor são gravadas na fita ativa (Tape) na ordem em que executam;
o backward percorre a fita em ordem reversa. As funções elementares deste módulo
aceitam ndarray ou Tensor, então dinâmicas, saltos e perdas são escritos uma vez só
e rodam tanto na simulação (arrays) quanto no treino (tensores).
"""

import numpy as np

from ..exceptions import NonFiniteError, ShapeError

_tapes = []


class _Node:
    __slots__ = ("out", "parents", "backward", "op")

    def __init__(self, out, parents, backward, op):
        self.out = out
        self.parents = parents
        self.backward = backward
        self.op = op


class Tape:
    """Fita de gravação; use como context manager"""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tapes.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def gradient(self, output, wrt):
        output = as_tensor(output)
        if output.data.size != 1:
            raise ShapeError(f"gradient needs a scalar output, got shape {output.shape}")
        grads = {id(output): np.ones_like(output.data)}
        for node in reversed(self.nodes):
            g = grads.get(id(node.out))
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.backward(g)):
                if pg is None or not parent.tracked:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
        return [np.array(grads.get(id(t), np.zeros_like(t.data)), dtype=float) for t in wrt]


class Tensor:
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=float)
        self.requires_grad = requires_grad
        self.tracked = requires_grad

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, tracked={self.tracked})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return len(self.data)

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data.copy()

    # aritmética

    def __add__(self, other):
        a, b = self, as_tensor(other)
        return _result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self, as_tensor(other)
        return _result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __neg__(self):
        a = self
        return _result(-a.data, (a,), lambda g: (-g,), "neg")

    def __mul__(self, other):
        a, b = self, as_tensor(other)
        return _result(a.data * b.data, (a, b),
                       lambda g: (_unbroadcast(g * b.data, a.shape),
                                  _unbroadcast(g * a.data, b.shape)), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, as_tensor(other)
        return _result(a.data / b.data, (a, b),
                       lambda g: (_unbroadcast(g / b.data, a.shape),
                                  _unbroadcast(-g * a.data / b.data ** 2, b.shape)), "div")

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, k):
        if isinstance(k, Tensor):
            raise ShapeError("only constant exponents are supported")
        a = self
        return _result(a.data ** k, (a,), lambda g: (g * k * a.data ** (k - 1),), "pow")

    def __matmul__(self, other):
        a, b = self, as_tensor(other)
        return _result(a.data @ b.data, (a, b), lambda g: _matmul_backward(a, b, g), "matmul")

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # forma

    def __getitem__(self, index):
        a = self

        def backward(g):
            full = np.zeros_like(a.data)
            np.add.at(full, index, g)
            return (full,)

        return _result(a.data[index], (a,), backward, "getitem")

    def reshape(self, *shape):
        a = self
        return _result(a.data.reshape(*shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")

    def swapaxes(self, i, j):
        a = self
        return _result(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),), "swapaxes")

    @property
    def T(self):
        return self.swapaxes(-1, -2)

    def sum(self, axis=None, keepdims=False):
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape),)

        return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, "sum")

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) / float(count)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def is_tensor(value):
    return isinstance(value, Tensor)


def data_of(value):
    """Valor numérico subjacente (sem gravar nada)"""
    return value.data if isinstance(value, Tensor) else np.asarray(value, dtype=float)


def _result(data, parents, backward, op):
    data = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    out = Tensor(data)
    if _tapes and any(p.tracked for p in parents):
        out.tracked = True
        _tapes[-1].nodes.append(_Node(out, parents, backward, op))
    return out


def _unbroadcast(g, shape):
    g = np.asarray(g, dtype=float)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _matmul_backward(a, b, g):
    ad, bd = a.data, b.data
    a2 = ad[None, :] if ad.ndim == 1 else ad
    b2 = bd[:, None] if bd.ndim == 1 else bd
    g2 = g
    if ad.ndim == 1:
        g2 = np.expand_dims(g2, -2)
    if bd.ndim == 1:
        g2 = np.expand_dims(g2, -1)
    ga = g2 @ np.swapaxes(b2, -1, -2)
    gb = np.swapaxes(a2, -1, -2) @ g2
    return _unbroadcast(ga, a2.shape).reshape(ad.shape), _unbroadcast(gb, b2.shape).reshape(bd.shape)


# funções elementares com despacho ndarray / Tensor

def sin(x):
    if not is_tensor(x):
        return np.sin(x)
    return _result(np.sin(x.data), (x,), lambda g: (g * np.cos(x.data),), "sin")


def cos(x):
    if not is_tensor(x):
        return np.cos(x)
    return _result(np.cos(x.data), (x,), lambda g: (-g * np.sin(x.data),), "cos")


def tanh(x):
    if not is_tensor(x):
        return np.tanh(x)
    t = np.tanh(x.data)
    return _result(t, (x,), lambda g: (g * (1.0 - t ** 2),), "tanh")


def exp(x):
    if not is_tensor(x):
        return np.exp(x)
    e = np.exp(x.data)
    return _result(e, (x,), lambda g: (g * e,), "exp")


def log(x):
    if not is_tensor(x):
        return np.log(x)
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sqrt(x):
    if not is_tensor(x):
        return np.sqrt(x)
    r = np.sqrt(x.data)
    return _result(r, (x,), lambda g: (g * 0.5 / r,), "sqrt")


def relu(x):
    if not is_tensor(x):
        return np.maximum(x, 0.0)
    return _result(np.maximum(x.data, 0.0), (x,), lambda g: (g * (x.data > 0.0),), "relu")


def absolute(x):
    if not is_tensor(x):
        return np.abs(x)
    return _result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def clip(x, low, high):
    if not is_tensor(x):
        return np.clip(x, low, high)
    inside = (x.data >= low) & (x.data <= high)
    return _result(np.clip(x.data, low, high), (x,), lambda g: (g * inside,), "clip")


def norm(x, axis=-1, keepdims=False):
    """Norma euclidiana com subgradiente zero na origem"""
    if not is_tensor(x):
        return np.linalg.norm(x, axis=axis, keepdims=keepdims)
    n = np.sqrt((x.data ** 2).sum(axis=axis, keepdims=True))
    safe = np.where(n > 0.0, n, 1.0)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.where(n > 0.0, g * x.data / safe, 0.0),)

    out = n if keepdims else np.squeeze(n, axis=axis)
    return _result(out, (x,), backward, "norm")


def atan2(y, x):
    if not (is_tensor(y) or is_tensor(x)):
        return np.arctan2(y, x)
    y, x = as_tensor(y), as_tensor(x)
    den = x.data ** 2 + y.data ** 2
    safe = np.where(den > 0.0, den, 1.0)

    def backward(g):
        gy = np.where(den > 0.0, g * x.data / safe, 0.0)
        gx = np.where(den > 0.0, -g * y.data / safe, 0.0)
        return _unbroadcast(gy, y.shape), _unbroadcast(gx, x.shape)

    return _result(np.arctan2(y.data, x.data), (y, x), backward, "atan2")


def where(condition, a, b):
    condition = np.asarray(condition, dtype=bool)
    if not (is_tensor(a) or is_tensor(b)):
        return np.where(condition, a, b)
    a, b = as_tensor(a), as_tensor(b)
    return _result(np.where(condition, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(np.where(condition, g, 0.0), a.shape),
                              _unbroadcast(np.where(condition, 0.0, g), b.shape)), "where")


def stack(values, axis=0):
    if not any(is_tensor(v) for v in values):
        return np.stack([np.asarray(v, dtype=float) for v in values], axis=axis)
    parts = [as_tensor(v) for v in values]
    data = np.stack([p.data for p in parts], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return _result(data, tuple(parts), backward, "stack")


def concat(values, axis=-1):
    if not any(is_tensor(v) for v in values):
        return np.concatenate([np.asarray(v, dtype=float) for v in values], axis=axis)
    parts = [as_tensor(v) for v in values]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _result(data, tuple(parts), backward, "concat")


def value_and_grad(fn, leaves):
    """Avalia fn() gravando a fita e devolve (valor, gradientes nas folhas)"""
    with Tape() as tape:
        out = fn()
    return float(data_of(out).reshape(-1)[0]), tape.gradient(out, leaves)

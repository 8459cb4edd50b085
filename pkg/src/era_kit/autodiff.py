"""Minimal reverse-mode automatic differentiation over dense float64 arrays,
plus a small MLP, Adam, and a flat-binary checkpoint format.

The graph built during a forward pass is single-use: backward() consumes it,
and a second backward through any consumed node raises.  Training loops
rebuild the graph every step.  A graph and its tensors belong to one thread;
independent graphs may run concurrently.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .numerics import normal_pdf


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """Array node in the computation graph."""

    __slots__ = ("data", "grad", "_parents", "requires_grad", "_consumed")

    def __init__(self, data, parents=(), requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents: tuple = tuple(parents)  # (Tensor, vjp) pairs
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    # ---- graph construction helpers -------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))

    def _unary(self, out_data, vjp) -> "Tensor":
        return Tensor(out_data, parents=((self, vjp),))

    # ---- arithmetic ------------------------------------------------------

    def __add__(self, other):
        o = self._lift(other)
        return Tensor(
            self.data + o.data,
            parents=(
                (self, lambda g: _unbroadcast(g, self.data.shape)),
                (o, lambda g: _unbroadcast(g, o.data.shape)),
            ),
        )

    __radd__ = __add__

    def __neg__(self):
        return self._unary(-self.data, lambda g: -g)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        o = self._lift(other)
        return Tensor(
            self.data * o.data,
            parents=(
                (self, lambda g: _unbroadcast(g * o.data, self.data.shape)),
                (o, lambda g: _unbroadcast(g * self.data, o.data.shape)),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        return Tensor(
            self.data / o.data,
            parents=(
                (self, lambda g: _unbroadcast(g / o.data, self.data.shape)),
                (o, lambda g: _unbroadcast(-g * self.data / (o.data ** 2), o.data.shape)),
            ),
        )

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, p: float):
        return self._unary(self.data ** p, lambda g: g * p * self.data ** (p - 1.0))

    def __matmul__(self, other):
        o = self._lift(other)
        if self.data.ndim != 2 or o.data.ndim != 2:
            raise ValueError("matmul expects 2-D operands")
        return Tensor(
            self.data @ o.data,
            parents=(
                (self, lambda g: g @ o.data.T),
                (o, lambda g: self.data.T @ g),
            ),
        )

    def __getitem__(self, key):
        def vjp(g):
            out = np.zeros_like(self.data)
            out[key] = g
            return out

        return Tensor(self.data[key], parents=((self, vjp),))

    # ---- reductions ------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        def vjp(g):
            if axis is None:
                return np.full_like(self.data, g)
            gg = np.asarray(g)
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            return np.broadcast_to(gg, self.data.shape).copy()

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), parents=((self, vjp),))

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ---- backward --------------------------------------------------------

    def backward(self):
        """Reverse-topological accumulation from a scalar loss."""
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            if node._consumed:
                raise RuntimeError("graph already consumed by a previous backward call")
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            # Leaves (parameters, constants) stay reusable across graphs.
            if node._parents:
                node._consumed = True
            if node.grad is None:
                continue
            for parent, vjp in node._parents:
                if not parent.requires_grad:
                    continue
                contrib = vjp(node.grad)
                # First contribution is taken as-is; later ones allocate a
                # fresh sum, so aliasing a child's grad array is harmless.
                parent.grad = contrib if parent.grad is None else parent.grad + contrib


# ---- elementwise functions ----------------------------------------------


def exp(t: Tensor) -> Tensor:
    out = np.exp(t.data)
    return Tensor(out, parents=((t, lambda g: g * out),))


def log(t: Tensor) -> Tensor:
    return Tensor(np.log(t.data), parents=((t, lambda g: g / t.data),))


def sqrt(t: Tensor) -> Tensor:
    out = np.sqrt(t.data)
    return Tensor(out, parents=((t, lambda g: g * 0.5 / out),))


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.data)
    return Tensor(out, parents=((t, lambda g: g * (1.0 - out * out)),))


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0.0
    return Tensor(np.where(mask, t.data, 0.0), parents=((t, lambda g: g * mask),))


def normal_cdf_t(t: Tensor) -> Tensor:
    from .numerics import normal_cdf_arr

    out = normal_cdf_arr(t.data)
    pdf = np.exp(-0.5 * t.data ** 2) / math.sqrt(2.0 * math.pi)
    return Tensor(out, parents=((t, lambda g: g * pdf),))


def normal_icdf_t(t: Tensor) -> Tensor:
    """Inverse normal CDF; derivative is 1 / pdf(icdf(u))."""
    from .numerics import normal_icdf_arr

    out = normal_icdf_arr(t.data)
    pdf = np.exp(-0.5 * out ** 2) / math.sqrt(2.0 * math.pi)
    return Tensor(out, parents=((t, lambda g: g / pdf),))


def maximum(t: Tensor, c: float) -> Tensor:
    mask = t.data >= c
    return Tensor(np.maximum(t.data, c), parents=((t, lambda g: g * mask),))


def minimum(t: Tensor, c: float) -> Tensor:
    mask = t.data <= c
    return Tensor(np.minimum(t.data, c), parents=((t, lambda g: g * mask),))


def clip(t: Tensor, lo: float, hi: float) -> Tensor:
    """Hard clip; gradient is zero outside [lo, hi]."""
    return minimum(maximum(t, lo), hi)


def straight_through_clip(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clip the value but pass the gradient through unchanged."""
    return Tensor(np.clip(t.data, lo, hi), parents=((t, lambda g: g),))


def detach(t: Tensor) -> Tensor:
    """Constant copy: no gradient flows into the original graph."""
    return Tensor(t.data.copy())


def concat(ts: Sequence[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in ts]
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(sl)]

        return vjp

    return Tensor(
        np.concatenate(datas, axis=axis),
        parents=tuple((t, make_vjp(i)) for i, t in enumerate(ts)),
    )


# ---- softmax family (last axis) -----------------------------------------


def softmax(t: Tensor) -> Tensor:
    e = np.exp(t.data - t.data.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return s * (g - (g * s).sum(axis=-1, keepdims=True))

    return Tensor(s, parents=((t, vjp),))


def log_softmax(t: Tensor) -> Tensor:
    m = t.data.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(t.data - m).sum(axis=-1, keepdims=True))
    s = np.exp(t.data - lse)

    def vjp(g):
        return g - s * g.sum(axis=-1, keepdims=True)

    return Tensor(t.data - lse, parents=((t, vjp),))


def log_sum_exp(t: Tensor, keepdims: bool = False) -> Tensor:
    m = t.data.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(t.data - m).sum(axis=-1, keepdims=True))
    s = np.exp(t.data - lse)

    def vjp(g):
        gg = np.asarray(g)
        if not keepdims:
            gg = np.expand_dims(gg, -1)
        return s * gg

    out = lse if keepdims else np.squeeze(lse, axis=-1)
    return Tensor(out, parents=((t, vjp),))


def gather_last(t: Tensor, idx: np.ndarray) -> Tensor:
    """out[...] = t[..., idx[...]]: pick one entry along the last axis."""
    idx = np.asarray(idx, dtype=np.int64)
    picked = np.take_along_axis(t.data, idx[..., None], axis=-1)[..., 0]

    def vjp(g):
        out = np.zeros_like(t.data)
        np.put_along_axis(out, idx[..., None], np.asarray(g)[..., None], axis=-1)
        return out

    return Tensor(picked, parents=((t, vjp),))


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused x @ w + b (bias broadcast over rows); one graph node."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ValueError("linear expects 2-D input and weight")
    return Tensor(
        x.data @ w.data + b.data,
        parents=(
            (x, lambda g: g @ w.data.T),
            (w, lambda g: x.data.T @ g),
            (b, lambda g: g.sum(axis=0)),
        ),
    )


def layer_norm(t: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis (no learned affine)."""
    mu = t.data.mean(axis=-1, keepdims=True)
    d = t.data - mu
    std = np.sqrt((d * d).mean(axis=-1, keepdims=True) + eps)
    y = d / std

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (g - gm - y * gym) / std

    return Tensor(y, parents=((t, vjp),))


# ---- networks ------------------------------------------------------------


class Mlp:
    """Fully-connected network; hidden activation relu or tanh, optional
    layer normalization before each hidden activation."""

    def __init__(
        self,
        widths: Sequence[int],
        rng: np.random.Generator,
        activation: str = "relu",
        use_layer_norm: bool = False,
    ):
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {activation!r}")
        self.widths = list(widths)
        self.activation = activation
        self.use_layer_norm = use_layer_norm
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            scale = math.sqrt(2.0 / n_in) if activation == "relu" else math.sqrt(1.0 / n_in)
            w = rng.standard_normal((n_in, n_out)) * scale
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(np.zeros(n_out), requires_grad=True))

    def parameters(self) -> list[Tensor]:
        return self.weights + self.biases

    def __call__(self, x: Tensor) -> Tensor:
        act = relu if self.activation == "relu" else tanh
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = linear(h, w, b)
            if i < last:
                if self.use_layer_norm:
                    h = layer_norm(h)
                h = act(h)
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Tape-free forward pass for target computation and evaluation."""
        h = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if i < last:
                if self.use_layer_norm:
                    mu = h.mean(axis=-1, keepdims=True)
                    d = h - mu
                    h = d / np.sqrt((d * d).mean(axis=-1, keepdims=True) + 1e-5)
                h = np.maximum(h, 0.0) if self.activation == "relu" else np.tanh(h)
        return h

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w.data
            out[f"{prefix}.b{i}"] = b.data
        return out

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray]):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w.data = np.array(arrays[f"{prefix}.w{i}"], dtype=np.float64)
            b.data = np.array(arrays[f"{prefix}.b{i}"], dtype=np.float64)


# ---- optimizer -----------------------------------------------------------


class AdamState:
    """First/second moment estimates and step counter for one parameter set."""

    def __init__(self, params: Sequence[Tensor], lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState):
    """Standard Adam with bias correction; updates params and state in place."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ValueError("gradient shape mismatch")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Adam:
    """Convenience wrapper that reads gradients off the parameters."""

    def __init__(self, params: Sequence[Tensor], lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState(self.params, lr=lr, betas=betas, eps=eps)

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# ---- checkpoints ---------------------------------------------------------

_CKPT_MAGIC = "era-kit-checkpoint v1"


def save_checkpoint(path: str, arrays: dict[str, np.ndarray]):
    """Plain-text shape manifest followed by the flat float64 payload."""
    with open(path, "wb") as f:
        lines = [_CKPT_MAGIC]
        for name, arr in arrays.items():
            dims = " ".join(str(d) for d in np.asarray(arr).shape)
            lines.append(f"{name} {dims}".rstrip())
        lines.append("END")
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        for arr in arrays.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    end = blob.index(b"END\n") + len(b"END\n")
    header = blob[:end].decode("ascii").splitlines()
    if header[0] != _CKPT_MAGIC:
        raise ValueError("not an era-kit checkpoint")
    payload = blob[end:]
    out: dict[str, np.ndarray] = {}
    offset = 0
    for line in header[1:-1]:
        parts = line.split()
        name, shape = parts[0], tuple(int(d) for d in parts[1:])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        out[name] = arr.reshape(shape).astype(np.float64)
        offset += count * 8
    return out


def finite_difference_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient oracle for autodiff checks."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g

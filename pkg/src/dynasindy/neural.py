"""Small dense networks with hand-written backpropagation and Adam.

Weights are stored ``(out, in)`` so a layer computes ``x @ W.T + b``; inputs are
batches of row vectors (a 1-D input is treated as a batch of one and returned
1-D). Gradients are sums over the batch, so callers minimising a mean loss pass
the already-averaged output gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("leaky_relu", "tanh", "linear")


class DimensionError(ValueError):
    pass


@dataclass
class Network:
    sizes: list
    activations: list
    weights: list
    biases: list
    slope: float = 0.01

    def __post_init__(self):
        if len(self.activations) != len(self.sizes) - 1:
            raise DimensionError("need one activation per layer")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i + 1], self.sizes[i]) or b.shape != (self.sizes[i + 1],):
                raise DimensionError(f"layer {i} has shapes {w.shape}, {b.shape}")

    @property
    def params(self) -> list:
        """Flat list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Network":
        return Network(
            list(self.sizes), list(self.activations),
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.slope,
        )

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            list(self.sizes) == list(other.sizes)
            and list(self.activations) == list(other.activations)
            and self.slope == other.slope
            and all(np.array_equal(a, b) for a, b in zip(self.params, other.params))
        )

    def __call__(self, x):
        return forward(self, x)


def init_network(sizes, activations, rng, slope=0.01, final_scale=1.0) -> Network:
    """Uniform ``+-1/sqrt(fan_in)`` initialisation; the last layer is scaled by ``final_scale``."""
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        scale = final_scale if i == len(sizes) - 2 else 1.0
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)) * scale)
        biases.append(rng.uniform(-bound, bound, size=fan_out) * scale)
    return Network(list(sizes), list(activations), weights, biases, slope)


def _activate(z, act, slope):
    if act == "leaky_relu":
        # max(z, slope*z) equals the leaky ReLU for 0 <= slope <= 1
        return np.maximum(z, slope * z) if 0.0 <= slope <= 1.0 else np.where(z >= 0, z, slope * z)
    if act == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z, a, act, slope):
    if act == "leaky_relu":
        return np.where(z >= 0, 1.0, slope)
    if act == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _as_batch(net, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.sizes[0]:
        raise DimensionError(f"expected input width {net.sizes[0]}, got {x.shape[1]}")
    return x, single


def forward(net: Network, x, return_cache=False):
    x, single = _as_batch(net, x)
    zs, acts = [], [x]
    a = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = a @ w.T + b
        a = _activate(z, act, net.slope)
        zs.append(z)
        acts.append(a)
    out = a[0] if single else a
    return (out, (zs, acts)) if return_cache else out


def backward(net: Network, x, grad_out, cache=None):
    """Reverse-mode gradients of ``sum(grad_out * forward(x))``.

    Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
    :attr:`Network.params`.
    """
    if cache is None:
        _, cache = forward(net, x, return_cache=True)
    zs, acts = cache
    g = np.atleast_2d(np.asarray(grad_out, dtype=float))
    if g.shape != acts[-1].shape:
        raise DimensionError(f"output gradient shape {g.shape} != output shape {acts[-1].shape}")
    grads = [None] * (2 * len(net.weights))
    for i in reversed(range(len(net.weights))):
        g = g * _activation_grad(zs[i], acts[i + 1], net.activations[i], net.slope)
        grads[2 * i] = g.T @ acts[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i]
    single = np.asarray(x).ndim == 1
    return grads, (g[0] if single else g)


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kwargs) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kwargs)

    def copy(self) -> "AdamState":
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v],
                         self.step, self.beta1, self.beta2, self.eps)

    def __eq__(self, other):
        if not isinstance(other, AdamState):
            return NotImplemented
        return (
            (self.step, self.beta1, self.beta2, self.eps)
            == (other.step, other.beta1, other.beta2, other.eps)
            and all(np.array_equal(a, b) for a, b in zip(self.m + self.v, other.m + other.v))
        )


def adam_step(params, grads, state: AdamState, lr: float):
    """In-place bias-corrected Adam update of ``params``; returns ``(params, state)``."""
    if len(params) != len(grads):
        raise DimensionError("params and grads differ in length")
    if not all(np.isfinite(g.sum()) for g in grads):
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in layer {i // 2} ({'Wb'[i % 2]})")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def polyak_update(target: Network, online: Network, tau: float):
    """``target <- tau * online + (1 - tau) * target`` in place."""
    for t, o in zip(target.params, online.params):
        t *= 1.0 - tau
        t += tau * o


# -- text checkpoints ------------------------------------------------------

def _fmt(values) -> str:
    return " ".join(f"{v:.17g}" for v in np.ravel(values))


def network_to_lines(net: Network) -> list[str]:
    lines = ["net v1", " ".join(str(s) for s in net.sizes), " ".join(net.activations),
             f"{net.slope:.17g}"]
    for w, b in zip(net.weights, net.biases):
        lines += [_fmt(row) for row in w]
        lines.append(_fmt(b))
    return lines


def network_from_lines(lines) -> tuple[Network, int]:
    """Parse a network block; returns ``(network, lines_consumed)``."""
    if lines[0].strip() != "net v1":
        raise ValueError(f"expected 'net v1' header, got {lines[0]!r}")
    sizes = [int(s) for s in lines[1].split()]
    acts = lines[2].split()
    slope = float(lines[3])
    pos = 4
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.array([[float(v) for v in lines[pos + r].split()] for r in range(fan_out)])
        pos += fan_out
        b = np.array([float(v) for v in lines[pos].split()])
        pos += 1
        weights.append(w.reshape(fan_out, fan_in))
        biases.append(b)
    return Network(sizes, acts, weights, biases, slope), pos


def save_network(net: Network, path):
    with open(path, "w") as fh:
        fh.write("\n".join(network_to_lines(net)) + "\n")


def load_network(path) -> Network:
    with open(path) as fh:
        lines = fh.read().splitlines()
    return network_from_lines(lines)[0]


def adam_to_lines(state: AdamState) -> list[str]:
    lines = [f"adam v1 {state.step} {state.beta1:.17g} {state.beta2:.17g} {state.eps:.17g} {len(state.m)}"]
    for a in state.m + state.v:
        lines.append(" ".join(str(s) for s in a.shape) + " | " + _fmt(a))
    return lines


def adam_from_lines(lines) -> tuple[AdamState, int]:
    head = lines[0].split()
    if head[:2] != ["adam", "v1"]:
        raise ValueError(f"expected 'adam v1' header, got {lines[0]!r}")
    step, b1, b2, eps, n = int(head[2]), float(head[3]), float(head[4]), float(head[5]), int(head[6])
    arrays = []
    for line in lines[1:1 + 2 * n]:
        shape, values = line.split("|")
        shape = tuple(int(s) for s in shape.split())
        arrays.append(np.array([float(v) for v in values.split()]).reshape(shape))
    return AdamState(arrays[:n], arrays[n:], step, b1, b2, eps), 1 + 2 * n


__all__ = [
    "AdamState", "DimensionError", "Network", "adam_step", "backward", "forward",
    "init_network", "load_network", "polyak_update", "save_network",
]

"""Minimal dense-network engine: Tanh MLPs with analytic backprop, Adam,
and the Gaussian policy head. Everything is plain float64 numpy; forward
passes are pure functions of (parameters, input)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

HIDDEN_WIDTH = 20
HIDDEN_LAYERS = 4
STD_FLOOR = 1e-3
LOG_2PI = float(np.log(2.0 * np.pi))


class CheckpointError(ValueError):
    """Network checkpoint file is malformed or carries the wrong version."""


@dataclass
class MlpCache:
    x: np.ndarray
    activations: list  # post-activation output of every layer
    out: np.ndarray


class Mlp:
    """Fully connected net, Tanh on hidden layers, identity output."""

    def __init__(self, sizes: tuple[int, ...], rng: np.random.Generator | None = None):
        if len(sizes) < 2:
            raise ValueError("an Mlp needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @classmethod
    def standard(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "Mlp":
        """The architecture used everywhere: 4 hidden layers of width 20."""
        return cls((n_in,) + (HIDDEN_WIDTH,) * HIDDEN_LAYERS + (n_out,), rng)

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy_from(self, other: "Mlp") -> None:
        if self.sizes != other.sizes:
            raise ValueError("cannot copy parameters between different topologies")
        for w, ow in zip(self.weights, other.weights):
            w[...] = ow
        for b, ob in zip(self.biases, other.biases):
            b[...] = ob

    def clone(self) -> "Mlp":
        twin = Mlp(self.sizes)
        twin.copy_from(self)
        return twin

    def forward(self, x: np.ndarray, cache: bool = False):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        if h.shape[-1] != self.sizes[0]:
            raise ValueError(f"input size {h.shape[-1]} != expected {self.sizes[0]}")
        activations = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = np.tanh(h)
            activations.append(h)
        out = h[0] if squeeze else h
        if cache:
            return out, MlpCache(x=x, activations=activations, out=h)
        return out

    def backward(self, cache: MlpCache, upstream: np.ndarray):
        """Gradients of sum(upstream * output) w.r.t. params and input.

        Returns (param_grads aligned with `params`, input gradient).
        """
        upstream = np.asarray(upstream, dtype=float)
        squeeze = upstream.ndim == 1
        delta = upstream[None, :] if squeeze else upstream
        if delta.shape != cache.out.shape:
            raise ValueError(
                f"stale cache: upstream shape {delta.shape} does not match "
                f"cached output shape {cache.out.shape}")
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                delta = delta * (1.0 - cache.activations[i + 1] ** 2)
            grads_w[i] = cache.activations[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        input_grad = delta[0] if squeeze else delta
        param_grads = []
        for gw, gb in zip(grads_w, grads_b):
            param_grads.extend((gw, gb))
        return param_grads, input_grad


class AdamState:
    """Standard bias-corrected Adam. step() mutates the params in place."""

    def __init__(self, params: list, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list, grads: list) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter/gradient count does not match optimizer state")
        for g in grads:
            if np.any(~np.isfinite(g)):
                raise FloatingPointError("non-finite gradient; aborting training")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state: AdamState, params: list, grads: list) -> None:
    state.step(params, grads)


def clip_grad_norm(grads: list, max_norm: float) -> list:
    """Rescale gradients so their global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm > 0:
        scale = max_norm / total
        return [g * scale for g in grads]
    return grads


# --- Gaussian policy head -----------------------------------------------------

def split_head(out: np.ndarray, min_std=STD_FLOOR, center=0.0, scale=1.0):
    """Split actor output (..., 2d) into mean (..., d) and std (..., d).

    mean = center + scale * raw; std = scale * exp(raw), floored at
    min_std (scalar or per-dimension; hard lower bound STD_FLOOR). The
    affine calibration lets raw outputs live on a normalized scale while
    the sampled actions are in physical units; the defaults are the
    identity calibration.
    """
    out = np.asarray(out, dtype=float)
    d = out.shape[-1] // 2
    mean = center + scale * out[..., :d]
    raw = out[..., d:]
    std = np.maximum(scale * np.exp(raw), np.maximum(min_std, STD_FLOOR))
    return mean, std


def gaussian_sample(mean: np.ndarray, std: np.ndarray, normals: np.ndarray) -> np.ndarray:
    return mean + std * normals


def gaussian_logp(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Joint log-density of independent Normal(mean, std) dimensions."""
    if np.any(std <= 0):
        raise ValueError("std must be > 0")
    z = (x - mean) / std
    per_dim = -0.5 * LOG_2PI - np.log(std) - 0.5 * z * z
    return per_dim.sum(axis=-1)


def gaussian_logp_grads(x: np.ndarray, mean: np.ndarray, std: np.ndarray):
    """d logp / d mean and d logp / d std, elementwise."""
    z = (x - mean) / std
    dmean = z / std
    dstd = (z * z - 1.0) / std
    return dmean, dstd


def head_upstream(x: np.ndarray, mean: np.ndarray, std: np.ndarray,
                  weight: np.ndarray, min_std=STD_FLOOR, scale=1.0) -> np.ndarray:
    """Upstream gradient into the raw actor output for sum(weight * logp).

    Chains through the head calibration: d mean / d raw = scale and
    d std / d raw = std (the scaled exponential), zero where the floor is
    active.
    """
    dmean, dstd = gaussian_logp_grads(x, mean, std)
    w = np.asarray(weight)[..., None]
    floor = np.maximum(min_std, STD_FLOOR)
    draw = dstd * std * (std > floor)
    return np.concatenate([w * dmean * scale, w * draw], axis=-1)


def log_prob_and_sample(head_out: np.ndarray, rng: np.random.Generator):
    """Sample raw actions from the head output and return their log-density."""
    mean, std = split_head(head_out)
    normals = rng.standard_normal(mean.shape)
    x = gaussian_sample(mean, std, normals)
    return x, gaussian_logp(x, mean, std)


# --- portable decimal-text checkpoints ----------------------------------------

_NET_FORMAT = "dfrelay-net-v1"


def save_networks(nets: dict[str, Mlp], path: str | Path) -> None:
    lines = [_NET_FORMAT, f"count {len(nets)}"]
    for name, net in sorted(nets.items()):
        lines.append(f"net {name}")
        lines.append("sizes " + " ".join(str(s) for s in net.sizes))
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            for r, row in enumerate(w):
                lines.append(f"W{i} {r} " + " ".join(repr(float(v)) for v in row))
            lines.append(f"b{i} " + " ".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_networks(path: str | Path) -> dict[str, Mlp]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _NET_FORMAT:
        found = lines[0] if lines else "<empty>"
        raise CheckpointError(
            f"unsupported checkpoint format: expected {_NET_FORMAT!r}, found {found!r}")

    def parse_floats(tokens, count, what):
        if len(tokens) != count:
            raise CheckpointError(f"{what}: expected {count} values, found {len(tokens)}")
        try:
            return np.array([float(t) for t in tokens])
        except ValueError as exc:
            raise CheckpointError(f"{what}: could not parse numeric field ({exc})") from exc

    nets: dict[str, Mlp] = {}
    name = None
    net = None
    for line in lines[1:]:
        if not line.strip() or line.startswith("count "):
            continue
        kind, rest = line.split(" ", 1)
        if kind == "net":
            name = rest.strip()
            net = None
        elif kind == "sizes":
            sizes = tuple(int(t) for t in rest.split())
            net = Mlp(sizes)
            nets[name] = net
        elif kind.startswith("W"):
            layer = int(kind[1:])
            tokens = rest.split()
            row = int(tokens[0])
            net.weights[layer][row] = parse_floats(
                tokens[1:], net.sizes[layer + 1], f"net {name} W{layer} row {row}")
        elif kind.startswith("b"):
            layer = int(kind[1:])
            net.biases[layer] = parse_floats(
                rest.split(), net.sizes[layer + 1], f"net {name} b{layer}")
        else:
            raise CheckpointError(f"unknown record kind {kind!r} in checkpoint")
    return nets

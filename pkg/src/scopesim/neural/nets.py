"""Networks over a flat parameter vector.

Every network owns a :class:`ParamLayout` that partitions one flat float32
array into named slices. ``forward`` returns outputs and a cache;
``backward`` takes output gradients and returns a flat gradient with the
same layout.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .layers import Conv2d, Dense, Flatten, Layer, activation

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
ACTION_EPS = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


class ParamLayout:
    """Named, contiguous slices of a flat parameter vector."""

    def __init__(self, entries: list[tuple[str, tuple[int, ...]]]):
        self.entries = []
        offset = 0
        seen = set()
        for name, shape in entries:
            if name in seen:
                raise ValueError(f"duplicate parameter name {name}")
            seen.add(name)
            size = int(np.prod(shape))
            self.entries.append((name, tuple(shape), offset, size))
            offset += size
        self.size = offset

    def views(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        if flat.shape != (self.size,):
            raise ValueError(f"parameter vector has shape {flat.shape}, layout needs ({self.size},)")
        return {n: flat[o : o + s].reshape(shape) for n, shape, o, s in self.entries}

    def slices(self) -> dict[str, slice]:
        return {n: slice(o, o + s) for n, _, o, s in self.entries}

    def to_list(self) -> list[dict]:
        return [{"name": n, "shape": list(shape), "offset": o} for n, shape, o, _ in self.entries]


class Sequential:
    def __init__(self, layers: list[Layer], in_shape: tuple[int, ...]):
        self.layers = layers
        self.in_shape = tuple(in_shape)
        shape = self.in_shape
        names = set()
        for layer in layers:
            if layer.param_shapes():
                if layer.name in names:
                    raise ValueError(f"duplicate layer name {layer.name}")
                names.add(layer.name)
            shape = layer.out_shape(shape)
        self.out_shape = shape

    def param_entries(self):
        return [(f"{l.name}.{k}", s) for l in self.layers for k, s in l.param_shapes().items()]

    @staticmethod
    def _sub(views, layer):
        return {k: views[f"{layer.name}.{k}"] for k in layer.param_shapes()}

    def forward(self, views, x):
        if x.shape[1:] != self.in_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match {self.in_shape}")
        caches = []
        for layer in self.layers:
            try:
                x, c = layer.forward(self._sub(views, layer), x)
            except ValueError as exc:
                raise ValueError(f"layer {layer.name}: {exc}") from None
            caches.append(c)
        return x, caches

    def backward(self, views, grads, caches, dy):
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(self._sub(views, layer), c, dy, self._sub(grads, layer))
        return dy


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of the policy (and, with ``dense=(32, 32)``, of the reward nets).

    ``conv`` entries are (out_channels, kernel, stride); ``input_shape`` is
    channels-first (C, H, W).
    """

    input_shape: tuple[int, int, int] = (4, 64, 80)
    conv: tuple = ((8, 3, 2), (16, 3, 1), (16, 3, 2), (32, 3, 1), (32, 3, 2), (32, 3, 2))
    dense: tuple = (128, 64)
    action_dim: int = 6
    conv_activation: str = "relu"
    dense_activation: str = "relu"
    log_std_init: float = -0.5
    state_dependent_std: bool = False

    def __post_init__(self):
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ValueError("input_shape must be (C, H, W) with positive entries")
        for c in self.conv:
            if len(c) != 3 or min(c) < 1:
                raise ValueError(f"bad conv entry {c}")
        if any(w < 1 for w in self.dense):
            raise ValueError("dense widths must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        d = dict(d)
        if "input_shape" in d:
            d["input_shape"] = tuple(d["input_shape"])
        if "conv" in d:
            d["conv"] = tuple(tuple(c) for c in d["conv"])
        if "dense" in d:
            d["dense"] = tuple(d["dense"])
        return cls(**d)


REWARD_SPEC = NetworkSpec(conv=((16, 5, 4), (32, 3, 2)), dense=(32, 32))


def _encoder(spec: NetworkSpec, prefix: str) -> Sequential:
    C, H, W = spec.input_shape
    layers: list[Layer] = []
    ch = C
    for i, (out, k, s) in enumerate(spec.conv):
        layers += [Conv2d(ch, out, k, s, name=f"{prefix}conv{i}"), activation(spec.conv_activation)]
        ch = out
    layers.append(Flatten())
    return Sequential(layers, (H, W, C))


def _mlp(in_dim: int, widths, act: str, prefix: str, out_dim: int | None = None) -> Sequential:
    layers: list[Layer] = []
    d = in_dim
    for i, w in enumerate(widths):
        layers += [Dense(d, w, name=f"{prefix}fc{i}"), activation(act)]
        d = w
    if out_dim is not None:
        layers.append(Dense(d, out_dim, name=f"{prefix}out"))
    return Sequential(layers, (in_dim,))


def to_nhwc(obs: np.ndarray, dtype) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(np.asarray(obs), 1, -1), dtype=dtype)


def _init(layout: ParamLayout, rng: np.random.Generator, scales: dict[str, float], dtype) -> np.ndarray:
    flat = np.zeros(layout.size, dtype=dtype)
    views = layout.views(flat)
    for name, shape, _, _ in layout.entries:
        if name.endswith(".w"):
            fan_in = shape[0]
            gain = scales.get(name.rsplit(".", 1)[0], math.sqrt(2.0))
            views[name][...] = rng.normal(0.0, gain / math.sqrt(fan_in), shape)
    return flat


@dataclass
class GaussianPolicyOutput:
    mean: np.ndarray  # (N, A) pre-squash mean
    log_std: np.ndarray  # (N, A), clamped
    value: np.ndarray  # (N,)
    features: np.ndarray | None = None  # last hidden layer

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


class PolicyNetwork:
    """Shared conv encoder and MLP with a Gaussian action head and a value head."""

    def __init__(self, spec: NetworkSpec, dtype=np.float32):
        self.spec = spec
        self.dtype = dtype
        self.encoder = _encoder(spec, "enc_")
        self.mlp = _mlp(self.encoder.out_shape[0], spec.dense, spec.dense_activation, "mlp_")
        feat = self.mlp.out_shape[0]
        A = spec.action_dim
        self.pi_head = Dense(feat, 2 * A if spec.state_dependent_std else A, name="pi")
        self.v_head = Dense(feat, 1, name="v")
        entries = self.encoder.param_entries() + self.mlp.param_entries()
        entries += [("pi.w", self.pi_head.param_shapes()["w"]), ("pi.b", self.pi_head.param_shapes()["b"])]
        entries += [("v.w", (feat, 1)), ("v.b", (1,))]
        if not spec.state_dependent_std:
            entries.append(("log_std", (A,)))
        self.layout = ParamLayout(entries)

    @property
    def feature_dim(self) -> int:
        return self.mlp.out_shape[0]

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        flat = _init(self.layout, rng, {"pi": 0.01, "v": 1.0}, self.dtype)
        v = self.layout.views(flat)
        if self.spec.state_dependent_std:
            v["pi.b"][self.spec.action_dim :] = self.spec.log_std_init
        else:
            v["log_std"][...] = self.spec.log_std_init
        return flat

    def forward(self, params: np.ndarray, obs: np.ndarray):
        views = self.layout.views(params)
        x = to_nhwc(obs, self.dtype)
        if x.shape[1:] != self.encoder.in_shape:
            raise ValueError(f"observation shape {np.shape(obs)[1:]} does not match network input {self.spec.input_shape}")
        h, c_enc = self.encoder.forward(views, x)
        f, c_mlp = self.mlp.forward(views, h)
        pv = {"w": views["pi.w"], "b": views["pi.b"]}
        head, c_pi = self.pi_head.forward(pv, f)
        value, c_v = self.v_head.forward({"w": views["v.w"], "b": views["v.b"]}, f)
        A = self.spec.action_dim
        if self.spec.state_dependent_std:
            mean, raw = head[:, :A], head[:, A:]
        else:
            mean, raw = head, np.broadcast_to(views["log_std"], head.shape)
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        clamp_mask = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
        out = GaussianPolicyOutput(mean, log_std, value[:, 0], f)
        return out, (c_enc, c_mlp, c_pi, c_v, clamp_mask)

    def backward(self, params, cache, d_mean=None, d_log_std=None, d_value=None, d_features=None) -> np.ndarray:
        views = self.layout.views(params)
        grad = np.zeros_like(params)
        g = self.layout.views(grad)
        c_enc, c_mlp, c_pi, c_v, clamp_mask = cache
        f = c_pi
        N = len(f)
        A = self.spec.action_dim
        d_mean = np.zeros((N, A), self.dtype) if d_mean is None else d_mean.astype(self.dtype, copy=False)
        d_ls = np.zeros((N, A), self.dtype) if d_log_std is None else d_log_std.astype(self.dtype, copy=False) * clamp_mask
        if self.spec.state_dependent_std:
            d_head = np.concatenate([d_mean, d_ls], axis=1)
        else:
            d_head = d_mean
            g["log_std"] += d_ls.sum(axis=0)
        df = self.pi_head.backward({"w": views["pi.w"]}, f, d_head, {"w": g["pi.w"], "b": g["pi.b"]})
        if d_value is not None:
            dv = np.asarray(d_value, dtype=self.dtype).reshape(N, 1)
            df = df + self.v_head.backward({"w": views["v.w"]}, f, dv, {"w": g["v.w"], "b": g["v.b"]})
        if d_features is not None:
            df = df + d_features
        dh = self.mlp.backward(views, g, c_mlp, df)
        self.encoder.backward(views, g, c_enc, dh)
        return grad

    def features(self, params, obs) -> np.ndarray:
        return self.forward(params, obs)[0].features


class RewardNetwork:
    """State-only scalar network: conv layers followed by an MLP ending in one output."""

    def __init__(self, spec: NetworkSpec = REWARD_SPEC, dtype=np.float32, prefix: str = ""):
        self.spec = spec
        self.dtype = dtype
        self.encoder = _encoder(spec, prefix + "enc_")
        self.mlp = _mlp(self.encoder.out_shape[0], spec.dense, spec.dense_activation, prefix + "mlp_", out_dim=1)
        self.layout = ParamLayout(self.encoder.param_entries() + self.mlp.param_entries())

    def init_params(self, rng):
        return _init(self.layout, rng, {}, self.dtype)

    def forward(self, params, obs):
        views = self.layout.views(params)
        h, c1 = self.encoder.forward(views, to_nhwc(obs, self.dtype))
        y, c2 = self.mlp.forward(views, h)
        return y[:, 0], (c1, c2)

    def backward(self, params, cache, dy):
        views = self.layout.views(params)
        grad = np.zeros_like(params)
        g = self.layout.views(grad)
        c1, c2 = cache
        dh = self.mlp.backward(views, g, c2, np.asarray(dy, dtype=self.dtype).reshape(-1, 1))
        self.encoder.backward(views, g, c1, dh)
        return grad


class StateActionNetwork:
    """Classifier over (state, action): conv encoder, action appended, MLP to one logit."""

    def __init__(self, spec: NetworkSpec = REWARD_SPEC, dtype=np.float32):
        self.spec = spec
        self.dtype = dtype
        self.encoder = _encoder(spec, "enc_")
        n = self.encoder.out_shape[0]
        self.mlp = _mlp(n + spec.action_dim, spec.dense, spec.dense_activation, "mlp_", out_dim=1)
        self.layout = ParamLayout(self.encoder.param_entries() + self.mlp.param_entries())

    def init_params(self, rng):
        return _init(self.layout, rng, {}, self.dtype)

    def forward(self, params, obs, actions):
        views = self.layout.views(params)
        h, c1 = self.encoder.forward(views, to_nhwc(obs, self.dtype))
        x = np.concatenate([h, np.asarray(actions, dtype=self.dtype)], axis=1)
        y, c2 = self.mlp.forward(views, x)
        return y[:, 0], (c1, c2, h.shape[1])

    def backward(self, params, cache, dy):
        views = self.layout.views(params)
        grad = np.zeros_like(params)
        g = self.layout.views(grad)
        c1, c2, n = cache
        dx = self.mlp.backward(views, g, c2, np.asarray(dy, dtype=self.dtype).reshape(-1, 1))
        self.encoder.backward(views, g, c1, dx[:, :n])
        return grad


# --- Gaussian with tanh squashing --------------------------------------------

def log_squash_jacobian(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2) computed without cancellation."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def unsquash(a: np.ndarray) -> np.ndarray:
    return np.arctanh(np.clip(a, -1.0 + ACTION_EPS, 1.0 - ACTION_EPS))


def gaussian_log_prob(u, mean, log_std):
    """Per-sample diagonal Gaussian log-density of pre-squash values ``u``."""
    z = (u - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std, axis=-1) - 0.5 * mean.shape[-1] * LOG_2PI


def log_prob_pre_squash(out: GaussianPolicyOutput, u: np.ndarray) -> np.ndarray:
    """log pi(tanh(u) | s): Gaussian density of ``u`` with the tanh change of variables."""
    u = np.asarray(u, dtype=np.float64)
    return gaussian_log_prob(u, out.mean.astype(np.float64), out.log_std.astype(np.float64)) - np.sum(log_squash_jacobian(u), axis=-1)


def log_prob(out: GaussianPolicyOutput, squashed_action: np.ndarray) -> np.ndarray:
    """log pi(a | s) for actions in (-1, 1); components at +-1 are pulled in by 1e-6 first."""
    return log_prob_pre_squash(out, unsquash(np.asarray(squashed_action, dtype=np.float64)))


def log_prob_grads(out: GaussianPolicyOutput, u: np.ndarray):
    """d log pi / d mean and d log pi / d log_std (the Jacobian term does not depend on either)."""
    std = np.exp(out.log_std.astype(np.float64))
    z = (u - out.mean) / std
    return z / std, z * z - 1.0


def entropy(out: GaussianPolicyOutput) -> np.ndarray:
    """Entropy of the pre-squash Gaussian per sample."""
    return np.sum(out.log_std, axis=-1) + 0.5 * out.mean.shape[-1] * (1.0 + LOG_2PI)


def sample(out: GaussianPolicyOutput, rng: np.random.Generator):
    """Draw ``u = mean + std * eps`` and return (tanh(u), u, log_prob)."""
    eps = rng.standard_normal(out.mean.shape)
    u = out.mean.astype(np.float64) + np.exp(out.log_std.astype(np.float64)) * eps
    return np.tanh(u), u, log_prob_pre_squash(out, u)


def deterministic_action(out: GaussianPolicyOutput) -> np.ndarray:
    return np.tanh(out.mean.astype(np.float64))

"""Binary preference classifier over MFCC matrices.

Four 2D conv layers (64, 64, 64, 8 channels, kernel 4x8, stride 2x4,
same-padding) with batch normalization and leaky ReLU, a 128-unit dense
layer with dropout, and a 2-way softmax head. Forward and backward passes
are written directly in numpy; gradients are exact for the realized
dropout mask and are verified against finite differences in the tests.

The math is dtype-generic: production critics use float32, gradient
checks build float64 instances.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

LIKE = 1
DISLIKE = 0


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """Asymmetric padding so that out = ceil(size / stride)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


@dataclass(frozen=True)
class CriticArchitecture:
    input_shape: tuple = (32, 345)        # (coefficients, frames)
    channels: tuple = (64, 64, 64, 8)
    kernel: tuple = (4, 8)                # (coefficient axis, time axis)
    stride: tuple = (2, 4)
    dense_units: int = 128
    n_classes: int = 2
    dropout: float = 0.25
    leaky_slope: float = 0.01
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9

    def conv_output_shapes(self):
        h, w = self.input_shape
        shapes = []
        for _ in self.channels:
            h = -(-h // self.stride[0])
            w = -(-w // self.stride[1])
            shapes.append((h, w))
        return shapes

    @property
    def flatten_size(self) -> int:
        h, w = self.conv_output_shapes()[-1]
        return self.channels[-1] * h * w

    def parameter_count(self) -> int:
        """Learnable parameters only (BN running statistics excluded)."""
        kh, kw = self.kernel
        count = 0
        c_in = 1
        for c_out in self.channels:
            count += c_out * c_in * kh * kw + c_out   # conv kernel + bias
            count += 2 * c_out                          # BN scale + shift
            c_in = c_out
        count += self.flatten_size * self.dense_units + self.dense_units
        count += self.dense_units * self.n_classes + self.n_classes
        return count

    def as_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "channels": list(self.channels),
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "dense_units": self.dense_units,
            "n_classes": self.n_classes,
            "dropout": self.dropout,
            "leaky_slope": self.leaky_slope,
            "bn_eps": self.bn_eps,
            "bn_momentum": self.bn_momentum,
        }

    @staticmethod
    def from_dict(d: dict) -> "CriticArchitecture":
        return CriticArchitecture(
            input_shape=tuple(d["input_shape"]),
            channels=tuple(d["channels"]),
            kernel=tuple(d["kernel"]),
            stride=tuple(d["stride"]),
            dense_units=int(d["dense_units"]),
            n_classes=int(d["n_classes"]),
            dropout=float(d["dropout"]),
            leaky_slope=float(d["leaky_slope"]),
            bn_eps=float(d["bn_eps"]),
            bn_momentum=float(d["bn_momentum"]),
        )

    def hash(self) -> bytes:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()[:8]


DEFAULT_ARCHITECTURE = CriticArchitecture()


class Conv2d:
    """Strided same-padded convolution via im2col."""

    def __init__(self, name, c_in, c_out, kernel, stride, dtype):
        self.name = name
        self.stride = stride
        self.kernel = kernel
        self.W = np.zeros((c_out, c_in, kernel[0], kernel[1]), dtype=dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self._cache = None

    def params(self):
        return [(f"{self.name}.W", self.W), (f"{self.name}.b", self.b)]

    decayed = ("W",)

    def _im2col(self, x):
        n, c, h, w = x.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = same_padding(h, kh, sh), same_padding(w, kw, sw)
        xp = np.pad(x, ((0, 0), (0, 0), ph, pw))
        view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
        view = view[:, :, ::sh, ::sw]                     # (n, c, ho, wo, kh, kw)
        ho, wo = view.shape[2], view.shape[3]
        cols = np.ascontiguousarray(view.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, -1)
        return cols, (n, ho, wo, xp.shape, ph, pw)

    def forward(self, x, train):
        cols, meta = self._im2col(x)
        n, ho, wo = meta[0], meta[1], meta[2]
        w2d = self.W.reshape(self.W.shape[0], -1)
        out = cols @ w2d.T + self.b
        if train:
            self._cache = (cols, meta)
        return out.reshape(n, ho, wo, -1).transpose(0, 3, 1, 2)

    def backward(self, dy):
        cols, (n, ho, wo, xp_shape, ph, pw) = self._cache
        self._cache = None
        c_out = self.W.shape[0]
        dy2d = dy.transpose(0, 2, 3, 1).reshape(-1, c_out)
        self.dW = (dy2d.T @ cols).reshape(self.W.shape)
        self.db = dy2d.sum(axis=0)
        dcols = dy2d @ self.W.reshape(c_out, -1)
        kh, kw = self.kernel
        sh, sw = self.stride
        dcols = dcols.reshape(n, ho, wo, -1, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += dcols[:, :, :, :, i, j]
        h = xp_shape[2] - ph[0] - ph[1]
        w = xp_shape[3] - pw[0] - pw[1]
        return dxp[:, :, ph[0] : ph[0] + h, pw[0] : pw[0] + w]


class BatchNorm2d:
    """Per-channel batch normalization over (N, H, W) with running stats."""

    def __init__(self, name, channels, eps, momentum, dtype):
        self.name = name
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.run_mean = np.zeros(channels, dtype=dtype)
        self.run_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def params(self):
        return [(f"{self.name}.gamma", self.gamma), (f"{self.name}.beta", self.beta)]

    def running(self):
        return [(f"{self.name}.run_mean", self.run_mean), (f"{self.name}.run_var", self.run_var)]

    decayed = ()

    def forward(self, x, train):
        shape = (1, -1, 1, 1)
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.run_mean[...] = self.momentum * self.run_mean + (1 - self.momentum) * mean
            self.run_var[...] = self.momentum * self.run_var + (1 - self.momentum) * var
            ivar = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean.reshape(shape)) * ivar.reshape(shape)
            self._cache = (xhat, ivar)
        else:
            ivar = 1.0 / np.sqrt(self.run_var + self.eps)
            xhat = (x - self.run_mean.reshape(shape)) * ivar.reshape(shape)
        return self.gamma.reshape(shape) * xhat + self.beta.reshape(shape)

    def backward(self, dy):
        xhat, ivar = self._cache
        self._cache = None
        shape = (1, -1, 1, 1)
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        self.dgamma = (dy * xhat).sum(axis=(0, 2, 3))
        self.dbeta = dy.sum(axis=(0, 2, 3))
        dxhat = dy * self.gamma.reshape(shape)
        dx = (
            dxhat
            - dxhat.mean(axis=(0, 2, 3)).reshape(shape)
            - xhat * (dxhat * xhat).mean(axis=(0, 2, 3)).reshape(shape)
        ) * ivar.reshape(shape)
        return dx


class LeakyReLU:
    def __init__(self, slope):
        self.slope = slope
        self._mask = None

    def forward(self, x, train):
        mask = x > 0
        if train:
            self._mask = mask
        return np.where(mask, x, self.slope * x)

    def backward(self, dy):
        mask = self._mask
        self._mask = None
        return np.where(mask, dy, self.slope * dy)


class Dense:
    def __init__(self, name, n_in, n_out, dtype):
        self.name = name
        self.W = np.zeros((n_in, n_out), dtype=dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self._cache = None

    def params(self):
        return [(f"{self.name}.W", self.W), (f"{self.name}.b", self.b)]

    decayed = ("W",)

    def forward(self, x, train):
        if train:
            self._cache = x
        return x @ self.W + self.b

    def backward(self, dy):
        x = self._cache
        self._cache = None
        self.dW = x.T @ dy
        self.db = dy.sum(axis=0)
        return dy @ self.W.T


class Dropout:
    """Inverted dropout on the dense activation; identity in eval mode."""

    def __init__(self, rate):
        self.rate = rate
        self._scale_mask = None

    def forward(self, x, train, rng):
        if not train or self.rate <= 0:
            return x
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
        self._scale_mask = mask
        return x * mask

    def backward(self, dy):
        if self._scale_mask is None:
            return dy
        mask = self._scale_mask
        self._scale_mask = None
        return dy * mask


class Critic:
    """All learnable state of the preference model, plus forward/backward."""

    def __init__(self, arch: CriticArchitecture = DEFAULT_ARCHITECTURE, dtype=np.float32):
        self.arch = arch
        self.dtype = np.dtype(dtype)
        self.convs = []
        self.bns = []
        self.acts = []
        c_in = 1
        for i, c_out in enumerate(arch.channels):
            self.convs.append(Conv2d(f"conv{i + 1}", c_in, c_out, arch.kernel, arch.stride, self.dtype))
            self.bns.append(BatchNorm2d(f"bn{i + 1}", c_out, arch.bn_eps, arch.bn_momentum, self.dtype))
            self.acts.append(LeakyReLU(arch.leaky_slope))
            c_in = c_out
        self.dense = Dense("dense", arch.flatten_size, arch.dense_units, self.dtype)
        self.dense_act = LeakyReLU(arch.leaky_slope)
        self.dropout = Dropout(arch.dropout)
        self.head = Dense("head", arch.dense_units, arch.n_classes, self.dtype)

    # --- parameter plumbing ---

    def _layers_with_params(self):
        out = []
        for conv, bn in zip(self.convs, self.bns):
            out.extend([conv, bn])
        out.extend([self.dense, self.head])
        return out

    def named_parameters(self):
        """Learnable tensors in declared order."""
        out = []
        for layer in self._layers_with_params():
            out.extend(layer.params())
        return out

    def named_state(self):
        """Learnable tensors plus BN running statistics (checkpoint order)."""
        out = []
        for conv, bn in zip(self.convs, self.bns):
            out.extend(conv.params())
            out.extend(bn.params())
            out.extend(bn.running())
        out.extend(self.dense.params())
        out.extend(self.head.params())
        return out

    def parameter_count(self) -> int:
        return sum(int(np.prod(a.shape)) for _, a in self.named_parameters())

    def decayed_parameters(self):
        """Weight tensors subject to L2 decay (kernels and dense weights only)."""
        out = []
        for layer in self._layers_with_params():
            for attr in layer.decayed:
                out.append((f"{layer.name}.{attr}", getattr(layer, attr)))
        return out

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for _, a in self.named_parameters()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        pos = 0
        for _, a in self.named_parameters():
            n = a.size
            a[...] = flat[pos : pos + n].reshape(a.shape).astype(a.dtype)
            pos += n
        if pos != flat.size:
            raise ValueError(f"flat vector has {flat.size} entries, expected {pos}")

    def clone(self) -> "Critic":
        other = Critic(self.arch, self.dtype)
        for (_, src), (_, dst) in zip(self.named_state(), other.named_state()):
            dst[...] = src
        return other

    # --- forward / backward ---

    def _check_input(self, features):
        x = np.asarray(features)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != tuple(self.arch.input_shape):
            raise ValueError(
                f"expected features shaped {self.arch.input_shape}, got {np.asarray(features).shape}"
            )
        return x

    def logits(self, features, train=False, rng=None):
        if train and self.arch.dropout > 0 and rng is None:
            raise ValueError("train-mode forward requires a random source for dropout")
        x = self._check_input(features)
        for conv, bn, act in zip(self.convs, self.bns, self.acts):
            x = act.forward(bn.forward(conv.forward(x, train), train), train)
        n = x.shape[0]
        if train:
            self._flat_shape = x.shape
        x = x.reshape(n, -1)
        x = self.dense_act.forward(self.dense.forward(x, train), train)
        x = self.dropout.forward(x, train, rng)
        return self.head.forward(x, train)

    def forward(self, features, mode: str = "eval", rng=None):
        """Probability of *like*; scalar for a single matrix, vector for a batch."""
        if mode not in ("eval", "train"):
            raise ValueError(f"mode must be 'eval' or 'train', got {mode!r}")
        single = np.asarray(features).ndim == 2
        z = self.logits(features, train=(mode == "train"), rng=rng)
        z = z - z.max(axis=1, keepdims=True)
        ez = np.exp(z)
        p_like = ez[:, LIKE] / ez.sum(axis=1)
        return float(p_like[0]) if single else p_like

    def loss_and_gradients(self, features, labels, rng=None, weight_decay=0.0):
        """Mean cross-entropy plus L2 penalty, with exact gradients.

        Returns (loss, grads) where grads maps parameter names to arrays
        aligned with named_parameters(). Runs in train mode: batch BN
        statistics (updating the running ones) and a dropout mask from rng
        when the architecture has dropout enabled.
        """
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        z = self.logits(features, train=True, rng=rng)
        n = z.shape[0]
        if labels.size != n:
            raise ValueError(f"{n} examples but {labels.size} labels")
        zs = z - z.max(axis=1, keepdims=True)
        log_probs = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
        loss = -log_probs[np.arange(n), labels].mean()
        dz = np.exp(log_probs)
        dz[np.arange(n), labels] -= 1.0
        dz /= n
        self._backward(dz)
        grads = {}
        for layer in self._layers_with_params():
            if isinstance(layer, BatchNorm2d):
                grads[f"{layer.name}.gamma"] = layer.dgamma
                grads[f"{layer.name}.beta"] = layer.dbeta
            else:
                grads[f"{layer.name}.W"] = layer.dW
                grads[f"{layer.name}.b"] = layer.db
        if weight_decay:
            for name, w in self.decayed_parameters():
                loss += 0.5 * weight_decay * float((w.astype(np.float64) ** 2).sum())
                grads[name] = grads[name] + weight_decay * w
        return float(loss), grads

    def _backward(self, dz):
        dx = self.head.backward(dz)
        dx = self.dropout.backward(dx)
        dx = self.dense_act.backward(dx)
        dx = self.dense.backward(dx)
        dx = dx.reshape(self._flat_shape)
        for conv, bn, act in zip(reversed(self.convs), reversed(self.bns), reversed(self.acts)):
            dx = conv.backward(bn.backward(act.backward(dx)))


def init_critic(rng: np.random.Generator, arch: CriticArchitecture = DEFAULT_ARCHITECTURE,
                dtype=np.float32) -> Critic:
    """Fresh critic: fan-in-scaled uniform weights (bound sqrt(6/fan_in)),
    zero biases, identity batch-norm with unit running variance."""
    critic = Critic(arch, dtype)
    for conv in critic.convs:
        fan_in = int(np.prod(conv.W.shape[1:]))
        bound = math.sqrt(6.0 / fan_in)
        conv.W[...] = rng.uniform(-bound, bound, size=conv.W.shape)
    for dense in (critic.dense, critic.head):
        fan_in = dense.W.shape[0]
        bound = math.sqrt(6.0 / fan_in)
        dense.W[...] = rng.uniform(-bound, bound, size=dense.W.shape)
    return critic

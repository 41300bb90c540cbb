"""One-hidden-layer ReLU critic with clipped weights.

``phi(x) = w2 . relu(w1 x + b1) + b2``. Only the weight matrices are
clipped by default; the Lipschitz constant depends on them alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import ValidationError

PARAM_NAMES = ("w1", "b1", "w2", "b2")
WEIGHT_NAMES = ("w1", "w2")


@dataclass(frozen=True, eq=False)
class CriticNet:
    w1: np.ndarray  # (hidden, d)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float
    clip_c: float = 0.01
    clip_biases: bool = False

    def __post_init__(self):
        w1 = np.array(self.w1, dtype=np.float64, ndmin=2)
        b1 = np.array(self.b1, dtype=np.float64).reshape(-1)
        w2 = np.array(self.w2, dtype=np.float64).reshape(-1)
        if not (w1.shape[0] == b1.shape[0] == w2.shape[0]):
            raise ValidationError(f"inconsistent hidden widths {w1.shape}, {b1.shape}, {w2.shape}")
        if not self.clip_c > 0:
            raise ValidationError("clip_c must be positive")
        for a in (w1, b1, w2):
            a.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", float(self.b2))
        if not all(np.all(np.isfinite(v)) for v in self.params().values()):
            raise ValidationError("critic parameters must be finite")

    @property
    def hidden(self):
        return self.w1.shape[0]

    @property
    def d(self):
        return self.w1.shape[1]

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": np.asarray(self.b2)}

    def with_params(self, params):
        return replace(self, **{k: params[k] for k in PARAM_NAMES if k in params})

    def __call__(self, xs):
        return forward_batch(self, xs)

    def __eq__(self, other):
        if not isinstance(other, CriticNet):
            return NotImplemented
        return (self.clip_c, self.clip_biases) == (other.clip_c, other.clip_biases) and all(
            np.array_equal(a, b) for a, b in zip(self.params().values(), other.params().values())
        )

    __hash__ = None


@dataclass(frozen=True)
class CriticGradient:
    """Gradient with the same layout as :class:`CriticNet` parameters."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": np.asarray(self.b2)}

    def __add__(self, other):
        return CriticGradient(*(getattr(self, k) + getattr(other, k) for k in PARAM_NAMES))

    def __sub__(self, other):
        return CriticGradient(*(getattr(self, k) - getattr(other, k) for k in PARAM_NAMES))

    def scale(self, a):
        return CriticGradient(*(a * getattr(self, k) for k in PARAM_NAMES))


def init_critic(d, hidden=64, clip_c=0.01, seed=0, clip_biases=False, bias_init=0.0):
    """Weights uniform on ``[-clip_c, clip_c]``, hidden biases all ``bias_init``."""
    if d < 1 or hidden < 1:
        raise ValidationError("d and hidden must be positive")
    rng = np.random.default_rng(seed)
    w1 = rng.uniform(-clip_c, clip_c, size=(hidden, d))
    w2 = rng.uniform(-clip_c, clip_c, size=hidden)
    b1 = np.full(hidden, float(bias_init))
    if clip_biases:
        b1 = np.clip(b1, -clip_c, clip_c)
    return CriticNet(w1, b1, w2, 0.0, clip_c, clip_biases)


def zero_critic(d, hidden=1, clip_c=0.01):
    return CriticNet(np.zeros((hidden, d)), np.zeros(hidden), np.zeros(hidden), 0.0, clip_c)


def _as_batch(net, xs):
    x = np.asarray(xs, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, net.d) if x.size else x.reshape(0, net.d)
    if x.ndim != 2 or x.shape[1] != net.d:
        raise ValidationError(f"points of dimension {x.shape[-1]} fed to a critic of input dimension {net.d}")
    return x


def forward_batch(net, xs):
    """Evaluate the critic on an ``(n, d)`` array; returns shape ``(n,)``."""
    x = _as_batch(net, xs)
    # overflow surfaces as inf/nan and is reported by the callers
    with np.errstate(over="ignore", invalid="ignore"):
        h = np.maximum(x @ net.w1.T + net.b1, 0.0)
        return h @ net.w2 + net.b2


def forward(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.d,):
        raise ValidationError(f"expected a point of dimension {net.d}, got shape {x.shape}")
    return float(forward_batch(net, x[None, :])[0])


def grad_params(net, xs, signs):
    """Gradient of ``sum_t signs[t] * phi(xs[t])`` with respect to all parameters.

    The ReLU derivative at 0 is taken as 0.
    """
    x = _as_batch(net, xs)
    s = np.asarray(signs, dtype=np.float64).reshape(-1)
    if s.shape[0] != x.shape[0]:
        raise ValidationError("signs and points differ in length")
    pre = x @ net.w1.T + net.b1
    act = np.maximum(pre, 0.0)
    dpre = (s[:, None] * (pre > 0.0)) * net.w2
    return CriticGradient(
        w1=dpre.T @ x,
        b1=dpre.sum(axis=0),
        w2=s @ act,
        b2=float(s.sum()),
    )


def input_grad(net, xs):
    """Per-point gradient of phi with respect to its input, shape ``(n, d)``."""
    x = _as_batch(net, xs)
    mask = (x @ net.w1.T + net.b1) > 0.0
    return (mask * net.w2) @ net.w1


def clip_weights(net, c=None):
    """Project weight matrices (and biases if ``net.clip_biases``) onto ``[-c, c]``."""
    c = net.clip_c if c is None else c
    if not c > 0:
        raise ValidationError("clipping bound must be positive")
    names = PARAM_NAMES if net.clip_biases else WEIGHT_NAMES
    return replace(net, **{k: np.clip(getattr(net, k), -c, c) for k in names})


def lipschitz_bound(net):
    """Upper bound ``||w2||_2 * ||w1||_2`` (spectral norm) on the Lipschitz constant."""
    return float(np.linalg.norm(net.w2) * np.linalg.norm(net.w1, 2))


def save_critic(net, path):
    blob = {k: np.asarray(v).tolist() for k, v in net.params().items()}
    blob.update(clip_c=net.clip_c, clip_biases=net.clip_biases)
    Path(path).write_text(json.dumps(blob, indent=1))


def load_critic(path):
    blob = json.loads(Path(path).read_text())
    return CriticNet(
        np.array(blob["w1"]), np.array(blob["b1"]), np.array(blob["w2"]), blob["b2"],
        blob.get("clip_c", 0.01), blob.get("clip_biases", False),
    )

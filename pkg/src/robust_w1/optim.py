"""RMSProp and the median-block critic training loops.

All three trainers share one loop. At iteration ``t`` the blocks are drawn
from a generator seeded by ``(seed, t)``, X before Y, so with one block per
sample every estimator walks the exact same trajectory.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .blocking import SchemeKind
from .critic import CriticNet, clip_weights, forward_batch, grad_params, init_critic
from .data import Sample, ValidationError
from .estimators import Estimator, EstimatorSpec, objective_from_values


class NumericalDivergence(RuntimeError):
    """Training produced a non-finite objective or parameter."""


def derive_rng(seed, *keys):
    """Independent generator for stream ``keys`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(keys)))


_INIT_STREAM = 0
_ITER_STREAM = 1


@dataclass
class RmsPropState:
    mean_square: dict
    decay: float = 0.9
    epsilon: float = 1e-8
    lr: float = 5e-5

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValidationError("decay must lie in (0, 1)")
        if not self.epsilon > 0 or not self.lr > 0:
            raise ValidationError("epsilon and lr must be positive")

    @classmethod
    def zeros_like(cls, params, **kw):
        return cls({k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in params.items()}, **kw)


def _as_dict(grad):
    return grad.params() if hasattr(grad, "params") else dict(grad)


def rmsprop_step(state, grad):
    """One RMSProp accumulation.

    Returns ``(update, new_state)`` with
    ``update = grad / (sqrt(mean_square) + epsilon)``; the caller applies
    ``w + lr * update`` for ascent or ``w - lr * update`` for descent.
    """
    g = _as_dict(grad)
    if g.keys() != state.mean_square.keys():
        raise ValidationError(f"gradient keys {sorted(g)} do not match state {sorted(state.mean_square)}")
    new_ms, update = {}, {}
    for k, acc in state.mean_square.items():
        gk = np.asarray(g[k], dtype=np.float64)
        if gk.shape != acc.shape:
            raise ValidationError(f"shape mismatch for {k}: {gk.shape} vs {acc.shape}")
        ms = state.decay * acc + (1.0 - state.decay) * gk * gk
        new_ms[k] = ms
        update[k] = gk / (np.sqrt(ms) + state.epsilon)
    return update, replace(state, mean_square=new_ms)


def apply_update(params, update, lr, sign=1.0):
    return {k: np.asarray(v) + sign * lr * update[k] for k, v in params.items()}


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of a critic training run.

    ``scheme`` is the per-sample blocking (partition or randomized SWoR
    blocks). ``reshuffle=False`` freezes the blocks drawn at iteration 0.
    """

    n_iter: int = 300
    k_x: int = 1
    k_y: int = 1
    scheme: SchemeKind = SchemeKind.PARTITION
    lr: float = 5e-5
    clip_c: float = 0.01
    hidden: int = 64
    seed: int = 0
    reshuffle: bool = True
    decay: float = 0.9
    epsilon: float = 1e-8
    clip_biases: bool = False
    bias_init: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeKind(self.scheme))
        if self.n_iter < 1:
            raise ValidationError("n_iter must be at least 1")
        if self.k_x < 1 or self.k_y < 1:
            raise ValidationError("block counts must be at least 1")

    @classmethod
    def for_epochs(cls, epochs, k, **kw):
        """Config running ``epochs`` passes over the data with ``k`` blocks per sample."""
        return cls(n_iter=max(1, int(round(epochs * k))), k_x=k, k_y=k, **kw)

    def to_json(self):
        d = asdict(self)
        d["scheme"] = self.scheme.value
        return d


@dataclass
class RunReport:
    """Objective trace of a training run.

    ``trace`` holds ``(iteration, epoch, objective)`` rows; the objective at
    iteration ``t`` is measured with the weights obtained after ``t``
    updates.
    """

    trace: list
    final_estimate: float
    config: object
    wall_time: float
    estimator: str = ""
    critic: CriticNet | None = field(default=None, repr=False)

    @property
    def objectives(self):
        return np.array([row[2] for row in self.trace])

    @property
    def epochs(self):
        return np.array([row[1] for row in self.trace])

    def to_csv(self, path):
        cfg = self.config.to_json() if hasattr(self.config, "to_json") else asdict(self.config)
        header = {"estimator": self.estimator, "config": cfg,
                  "final_estimate": self.final_estimate, "wall_time": self.wall_time}
        lines = ["# " + json.dumps(header, sort_keys=True), "iteration,epoch,objective"]
        lines += [f"{i},{e:.17g},{v:.17g}" for i, e, v in self.trace]
        Path(path).write_text("\n".join(lines) + "\n")
        return Path(path)


def read_report_csv(path):
    """Read a report CSV back as ``(header dict, (n, 3) array)``."""
    header, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            header.update(json.loads(line[1:]))
        elif line and not line.startswith("iteration"):
            rows.append([float(v) for v in line.split(",")])
    return header, np.array(rows).reshape(-1, 3)


def readout_window(n_iter):
    return max(1, n_iter // 20)


def _points(s):
    return s.points if isinstance(s, Sample) else np.atleast_2d(np.asarray(s, dtype=np.float64))


def train_critic(x, y, cfg, estimator, init=None, callback=None):
    """Median-block gradient ascent on the robust dual objective.

    Each iteration evaluates the critic on both samples, selects the median
    block(s) for ``estimator``, takes the gradient of the objective with
    that block frozen, applies an RMSProp ascent step and clips.
    """
    xs, ys = _points(x), _points(y)
    if xs.shape[1] != ys.shape[1]:
        raise ValidationError("samples differ in dimension")
    spec = EstimatorSpec(estimator, cfg.k_x, cfg.k_y, cfg.scheme)
    spec.validate_sizes(xs.shape[0], ys.shape[0])
    net = init if init is not None else init_critic(
        xs.shape[1], cfg.hidden, cfg.clip_c, derive_rng(cfg.seed, _INIT_STREAM), cfg.clip_biases, cfg.bias_init
    )
    state = RmsPropState.zeros_like(net.params(), decay=cfg.decay, epsilon=cfg.epsilon, lr=cfg.lr)
    both = np.concatenate([xs, ys])
    n = xs.shape[0]

    trace = []
    start = time.perf_counter()
    for t in range(cfg.n_iter):
        rng = derive_rng(cfg.seed, _ITER_STREAM, t if cfg.reshuffle else 0)
        fx, fy = forward_batch(net, xs), forward_batch(net, ys)
        if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fy))):
            raise NumericalDivergence(f"non-finite critic values at iteration {t}")
        value, mb = objective_from_values(fx, fy, spec, rng)
        if not np.isfinite(value):
            raise NumericalDivergence(f"non-finite objective at iteration {t} ({spec.kind.value})")
        trace.append((t, t / cfg.k_x, value))
        if callback is not None:
            callback(t, net, value, mb)

        ix, iy = np.flatnonzero(mb.x_weights), np.flatnonzero(mb.y_weights)
        pts = both[np.concatenate([ix, n + iy])]
        signs = np.concatenate([mb.x_weights[ix], -mb.y_weights[iy]])
        grad = grad_params(net, pts, signs)
        update, state = rmsprop_step(state, grad)
        params = apply_update(net.params(), update, cfg.lr, +1.0)
        if not all(np.all(np.isfinite(v)) for v in params.values()):
            raise NumericalDivergence(f"non-finite critic parameters at iteration {t}")
        net = clip_weights(net.with_params(params), cfg.clip_c)

    tail = readout_window(cfg.n_iter)
    final = float(np.mean([row[2] for row in trace[-tail:]]))
    return RunReport(trace, final, cfg, time.perf_counter() - start, spec.kind.value, net)


def train_w_mom(x, y, cfg, **kw):
    """Approximate W_MoM: separate median blocks for X and Y."""
    return train_critic(x, y, cfg, Estimator.MOM, **kw)


def train_w_mou_diag(x, y, cfg, **kw):
    """Approximate W_MoU-diag: median over the K diagonal pair blocks."""
    if cfg.k_x != cfg.k_y:
        raise ValidationError("MoU-diag needs k_x == k_y")
    return train_critic(x, y, cfg, Estimator.MOU_DIAG, **kw)


def train_w_mou(x, y, cfg, **kw):
    """Approximate W_MoU: median over all K_X x K_Y pair blocks."""
    return train_critic(x, y, cfg, Estimator.MOU, **kw)


TRAINERS = {
    Estimator.MOM: train_w_mom,
    Estimator.MOU_DIAG: train_w_mou_diag,
    Estimator.MOU: train_w_mou,
    Estimator.MOU_PAIRS: lambda x, y, cfg, **kw: train_critic(x, y, cfg, Estimator.MOU_PAIRS, **kw),
}

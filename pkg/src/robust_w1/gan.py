"""Toy-scale MoM-WGAN: a weight-clipped critic trained with a MoM loss on
the real mini-batch against a small MLP generator."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .blocking import median_index, partition
from .critic import clip_weights, forward_batch, grad_params, init_critic, input_grad
from .data import Sample, ValidationError
from .exact import exact_w1
from .optim import NumericalDivergence, RmsPropState, RunReport, apply_update, derive_rng, rmsprop_step

_S_INIT_CRITIC, _S_INIT_GEN, _S_BATCH, _S_BLOCKS, _S_GEN_Z = range(5)


@dataclass(frozen=True)
class Generator:
    """``g(z) = a2 relu(a1 z + c1) + c2`` mapping ``R^p`` to ``R^d``."""

    a1: np.ndarray  # (hidden, p)
    c1: np.ndarray  # (hidden,)
    a2: np.ndarray  # (d, hidden)
    c2: np.ndarray  # (d,)

    @property
    def hidden(self):
        return self.a1.shape[0]

    @property
    def latent_dim(self):
        return self.a1.shape[1]

    @property
    def d(self):
        return self.a2.shape[0]

    def params(self):
        return {"a1": self.a1, "c1": self.c1, "a2": self.a2, "c2": self.c2}

    def with_params(self, params):
        return replace(self, **params)

    def __call__(self, z):
        return generate(self, z)


def init_generator(latent_dim=2, d=2, hidden=32, seed=0):
    """Uniform ``+-1/sqrt(fan_in)`` initialisation, as in common MLP defaults."""
    rng = np.random.default_rng(seed)
    s1, s2 = 1.0 / np.sqrt(latent_dim), 1.0 / np.sqrt(hidden)
    return Generator(
        rng.uniform(-s1, s1, (hidden, latent_dim)),
        rng.uniform(-s1, s1, hidden),
        rng.uniform(-s2, s2, (d, hidden)),
        rng.uniform(-s2, s2, d),
    )


def generate(gen, z):
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != gen.latent_dim:
        raise ValidationError(f"latent codes of dimension {z.shape[1]}, generator expects {gen.latent_dim}")
    return np.maximum(z @ gen.a1.T + gen.c1, 0.0) @ gen.a2.T + gen.c2


def sample_latent(rng, size, latent_dim):
    return rng.standard_normal((size, latent_dim))


def generator_loss(gen, critic, z):
    """``-(1/b) sum_j phi(g(z_j))``."""
    return -float(np.mean(forward_batch(critic, generate(gen, z))))


def generator_grad(gen, critic, z):
    """Gradient of :func:`generator_loss` with respect to the generator parameters."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    pre = z @ gen.a1.T + gen.c1
    act = np.maximum(pre, 0.0)
    out = act @ gen.a2.T + gen.c2
    dout = -input_grad(critic, out) / z.shape[0]  # (b, d)
    dact = (dout @ gen.a2) * (pre > 0.0)
    return {
        "a1": dact.T @ z,
        "c1": dact.sum(axis=0),
        "a2": dout.T @ act,
        "c2": dout.sum(axis=0),
    }


@dataclass(frozen=True)
class GanConfig:
    """MoM-WGAN hyperparameters.

    ``gen_lr`` defaults to ``lr``. ``k_blocks = 1`` is the plain WGAN.
    """

    batch_size: int = 32
    n_critic: int = 5
    k_blocks: int = 4
    lr: float = 5e-3
    clip_c: float = 0.01
    latent_dim: int = 2
    max_generator_steps: int = 2000
    seed: int = 0
    critic_hidden: int = 64
    gen_hidden: int = 32
    gen_lr: float | None = None
    clip_biases: bool = True
    decay: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.batch_size >= self.k_blocks >= 1:
            raise ValidationError("need batch_size >= k_blocks >= 1")
        if self.n_critic < 1 or self.max_generator_steps < 1:
            raise ValidationError("n_critic and max_generator_steps must be positive")

    def to_json(self):
        return asdict(self)


def _critic_step_mom(critic, xb, yb, k, rng):
    """Objective and gradient with MoM on the real batch, plain mean on fakes."""
    fx, fy = forward_batch(critic, xb), forward_batch(critic, yb)
    blocks = partition(xb.shape[0], k, rng)
    means = fx[blocks].mean(axis=1)
    t = median_index(means)
    med = blocks[t]
    value = means[t] - fy.mean()
    pts = np.concatenate([xb[med], yb])
    signs = np.concatenate([np.full(med.size, 1.0 / med.size), np.full(yb.shape[0], -1.0 / yb.shape[0])])
    return value, grad_params(critic, pts, signs)


def _critic_step_plain(critic, xb, yb):
    fx, fy = forward_batch(critic, xb), forward_batch(critic, yb)
    value = fx.mean() - fy.mean()
    pts = np.concatenate([xb, yb])
    signs = np.concatenate([np.full(xb.shape[0], 1.0 / xb.shape[0]), np.full(yb.shape[0], -1.0 / yb.shape[0])])
    return value, grad_params(critic, pts, signs)


def _train(data, cfg, robust, snapshot_every=0, snapshot_size=1000):
    xs = data.points if isinstance(data, Sample) else np.atleast_2d(np.asarray(data, float))
    n, d = xs.shape
    if cfg.batch_size > n:
        raise ValidationError(f"batch size {cfg.batch_size} exceeds data size {n}")
    critic = init_critic(d, cfg.critic_hidden, cfg.clip_c, derive_rng(cfg.seed, _S_INIT_CRITIC), cfg.clip_biases)
    gen = init_generator(cfg.latent_dim, d, cfg.gen_hidden, derive_rng(cfg.seed, _S_INIT_GEN))
    gen_lr = cfg.lr if cfg.gen_lr is None else cfg.gen_lr
    c_state = RmsPropState.zeros_like(critic.params(), decay=cfg.decay, epsilon=cfg.epsilon, lr=cfg.lr)
    g_state = RmsPropState.zeros_like(gen.params(), decay=cfg.decay, epsilon=cfg.epsilon, lr=gen_lr)
    b = cfg.batch_size

    trace, snapshots = [], {}
    start = time.perf_counter()
    for step in range(cfg.max_generator_steps):
        for c in range(cfg.n_critic):
            brng = derive_rng(cfg.seed, _S_BATCH, step, c)
            xb = xs[brng.choice(n, size=b, replace=False)]
            yb = generate(gen, sample_latent(brng, b, cfg.latent_dim))
            if robust:
                value, grad = _critic_step_mom(critic, xb, yb, cfg.k_blocks, derive_rng(cfg.seed, _S_BLOCKS, step, c))
            else:
                value, grad = _critic_step_plain(critic, xb, yb)
            if not np.isfinite(value):
                raise NumericalDivergence(f"non-finite critic loss at generator step {step}")
            update, c_state = rmsprop_step(c_state, grad)
            critic = clip_weights(critic.with_params(apply_update(critic.params(), update, cfg.lr, +1.0)))

        z = sample_latent(derive_rng(cfg.seed, _S_GEN_Z, step), b, cfg.latent_dim)
        update, g_state = rmsprop_step(g_state, generator_grad(gen, critic, z))
        gen = gen.with_params(apply_update(gen.params(), update, gen_lr, -1.0))
        if not all(np.all(np.isfinite(v)) for v in gen.params().values()):
            raise NumericalDivergence(f"non-finite generator parameters at step {step}")
        trace.append((step, (step + 1) * cfg.n_critic * b / n, float(value)))
        if snapshot_every and (step + 1) % snapshot_every == 0:
            zs = sample_latent(derive_rng(cfg.seed, 99, step), snapshot_size, cfg.latent_dim)
            snapshots[step + 1] = generate(gen, zs)

    tail = max(1, len(trace) // 20)
    final = float(np.mean([r[2] for r in trace[-tail:]]))
    report = RunReport(trace, final, cfg, time.perf_counter() - start, "momwgan" if robust else "wgan", critic)
    report.snapshots = snapshots
    return gen, report


def train_momwgan(data, cfg, **kw):
    """MoM-WGAN: ``n_critic`` critic ascents per generator descent.

    The critic maximises ``MoM_X[phi] - mean phi(g(Z))`` with the MoM taken
    over ``k_blocks`` blocks of each real mini-batch; generated points
    always enter through their plain mean.
    """
    return _train(data, cfg, robust=True, **kw)


def train_wgan(data, cfg, **kw):
    """Baseline WGAN with weight clipping (plain means on both sides)."""
    return _train(data, cfg, robust=False, **kw)


def score_generator(gen, reference_inliers, n_gen=1000, seed=0, max_w1_points=500):
    """Distance of the generated distribution to the clean inliers.

    Returns ``{"mean_error": ..., "w1_to_inliers": ...}``: the Euclidean
    gap between generated and inlier means, and the exact W1 between
    equal-size subsamples of at most ``max_w1_points`` points.
    """
    if n_gen < 100:
        raise ValidationError("n_gen must be at least 100")
    ref = reference_inliers.inliers() if isinstance(reference_inliers, Sample) else np.asarray(reference_inliers, float)
    rng = np.random.default_rng(seed)
    fake = generate(gen, sample_latent(rng, n_gen, gen.latent_dim)) if isinstance(gen, Generator) else gen(rng, n_gen)
    mean_error = float(np.linalg.norm(fake.mean(axis=0) - ref.mean(axis=0)))
    size = min(max_w1_points, fake.shape[0], ref.shape[0])
    f_sub = fake[rng.choice(fake.shape[0], size, replace=False)]
    r_sub = ref if ref.shape[0] == size else ref[rng.choice(ref.shape[0], size, replace=False)]
    return {"mean_error": mean_error, "w1_to_inliers": exact_w1(f_sub, r_sub)}

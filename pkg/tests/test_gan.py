import numpy as np
import pytest

from robust_w1.data import ContaminationSpec, Gaussian, InlierSpec, Sample, ValidationError, generate_sample
from robust_w1.critic import CriticNet
from robust_w1.gan import (
    GanConfig,
    generate,
    generator_grad,
    generator_loss,
    init_generator,
    score_generator,
    train_momwgan,
    train_wgan,
)

CLEAN = InlierSpec(Gaussian((5.0, 5.0)), 400)


def _kink_free(gen, critic, z, margin=1e-4):
    pre_g = z @ gen.a1.T + gen.c1
    out = generate(gen, z)
    pre_c = out @ critic.w1.T + critic.b1
    return np.abs(pre_g).min() > margin and np.abs(pre_c).min() > margin


def test_generator_grad_finite_differences():
    rng = np.random.default_rng(0)
    done = 0
    while done < 20:
        gen = init_generator(2, 2, 6, seed=int(rng.integers(1 << 30)))
        critic = CriticNet(rng.normal(size=(5, 2)), rng.normal(size=5), rng.normal(size=5), 0.0, clip_c=10.0)
        z = rng.normal(size=(4, 2))
        if not _kink_free(gen, critic, z):
            continue
        g = generator_grad(gen, critic, z)
        for name, value in gen.params().items():
            flat = value.reshape(-1)
            for i in range(flat.size):
                up, dn = flat.copy(), flat.copy()
                up[i] += 1e-6
                dn[i] -= 1e-6
                num = (generator_loss(gen.with_params({name: up.reshape(value.shape)}), critic, z)
                       - generator_loss(gen.with_params({name: dn.reshape(value.shape)}), critic, z)) / 2e-6
                ana = g[name].reshape(-1)[i]
                assert abs(num - ana) <= 1e-5 * max(1.0, abs(num), abs(ana))
        done += 1


def test_config_validation():
    with pytest.raises(ValidationError):
        GanConfig(batch_size=4, k_blocks=8)
    with pytest.raises(ValidationError):
        GanConfig(n_critic=0)


def test_single_block_matches_baseline_bitwise():
    data = generate_sample(CLEAN, ContaminationSpec(), seed=1)
    cfg = GanConfig(k_blocks=1, max_generator_steps=30, seed=4)
    g1, r1 = train_momwgan(data, cfg)
    g2, r2 = train_wgan(data, cfg)
    np.testing.assert_array_equal(r1.objectives, r2.objectives)
    for k in g1.params():
        np.testing.assert_array_equal(g1.params()[k], g2.params()[k])


def test_critic_stays_clipped():
    data = generate_sample(CLEAN, ContaminationSpec(), seed=2)
    _, rep = train_momwgan(data, GanConfig(max_generator_steps=20, clip_c=0.02))
    for v in rep.critic.params().values():
        assert np.abs(v).max() <= 0.02


def test_batch_larger_than_data_rejected():
    data = Sample.clean(np.zeros((10, 2)))
    with pytest.raises(ValidationError):
        train_wgan(data, GanConfig(batch_size=32))


def test_score_constant_generator():
    data = generate_sample(CLEAN, ContaminationSpec(), seed=3)
    const = lambda rng, n: np.tile([1.0, 2.0], (n, 1))  # noqa: E731
    s = score_generator(const, data, n_gen=200)
    assert s["mean_error"] == pytest.approx(np.linalg.norm([1.0, 2.0] - data.points.mean(axis=0)), abs=1e-12)


def test_score_stub_reproducing_inliers():
    data = generate_sample(CLEAN, ContaminationSpec(), seed=3)
    stub = lambda rng, n: data.points[:n]  # noqa: E731
    assert score_generator(stub, data, n_gen=400)["w1_to_inliers"] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        score_generator(stub, data, n_gen=50)


def test_training_improves_on_untrained():
    data = generate_sample(CLEAN, ContaminationSpec(), seed=5)
    cfg = GanConfig(max_generator_steps=600, seed=5)
    before = score_generator(init_generator(seed=0), data)["mean_error"]
    gen, _ = train_wgan(data, cfg)
    assert score_generator(gen, data)["mean_error"] < before

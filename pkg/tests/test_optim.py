import numpy as np
import pytest

from robust_w1.blocking import partition, recommended_k
from robust_w1.critic import CriticNet, forward, grad_params, init_critic, lipschitz_bound, zero_critic
from robust_w1.data import Sample, ValidationError
from robust_w1.estimators import Estimator, EstimatorSpec, objective_from_values
from robust_w1.optim import (
    NumericalDivergence,
    RmsPropState,
    TrainConfig,
    derive_rng,
    read_report_csv,
    rmsprop_step,
    train_critic,
    train_w_mom,
    train_w_mou,
    train_w_mou_diag,
)


def _pair(seed=0, n=120, m=100, shift=2.0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 2)), rng.normal(size=(m, 2)) + shift


def test_rmsprop_first_step_worked_example():
    state = RmsPropState.zeros_like({"w": np.zeros(2)}, decay=0.9, epsilon=1e-8)
    update, state = rmsprop_step(state, {"w": np.array([1.0, -2.0])})
    np.testing.assert_allclose(state.mean_square["w"], [0.1, 0.4])
    np.testing.assert_allclose(update["w"], [1 / (np.sqrt(0.1) + 1e-8), -2 / (np.sqrt(0.4) + 1e-8)])


def test_rmsprop_zero_gradient_is_noop():
    state = RmsPropState.zeros_like({"w": np.ones(3)})
    update, _ = rmsprop_step(state, {"w": np.zeros(3)})
    np.testing.assert_array_equal(update["w"], 0.0)


def test_rmsprop_validation():
    with pytest.raises(ValidationError):
        RmsPropState({}, decay=1.0)
    state = RmsPropState.zeros_like({"w": np.zeros(2)})
    with pytest.raises(ValidationError):
        rmsprop_step(state, {"v": np.zeros(2)})
    with pytest.raises(ValidationError):
        rmsprop_step(state, {"w": np.zeros(3)})


def test_for_epochs_iteration_accounting():
    assert TrainConfig.for_epochs(100, 1).n_iter == 100
    assert TrainConfig.for_epochs(3, 50).n_iter == 150
    with pytest.raises(ValidationError):
        TrainConfig(n_iter=0)


def test_trace_epochs():
    x, y = _pair()
    rep = train_w_mom(x, y, TrainConfig.for_epochs(2, 5, seed=1))
    assert len(rep.trace) == 10
    np.testing.assert_allclose(rep.epochs, np.arange(10) / 5)


def test_single_block_estimators_identical_trajectories():
    x, y = _pair(1)
    cfg = TrainConfig(n_iter=40, seed=3)
    reps = [f(x, y, cfg) for f in (train_w_mom, train_w_mou, train_w_mou_diag)]
    for r in reps[1:]:
        np.testing.assert_array_equal(r.objectives, reps[0].objectives)
        assert r.critic == reps[0].critic


def test_deterministic_given_seed():
    x, y = _pair(2)
    cfg = TrainConfig(n_iter=30, k_x=4, k_y=4, seed=7)
    a, b = train_w_mou(x, y, cfg), train_w_mou(x, y, cfg)
    np.testing.assert_array_equal(a.objectives, b.objectives)
    c = train_w_mou(x, y, TrainConfig(n_iter=30, k_x=4, k_y=4, seed=8))
    assert not np.array_equal(a.objectives, c.objectives)


def test_objective_increases_on_shifted_data():
    x, y = _pair(3, shift=-3.0)
    rep = train_w_mou_diag(x, y, TrainConfig(n_iter=200, k_x=2, k_y=2, seed=0))
    obj = rep.objectives
    assert obj[-20:].mean() > obj[:5].mean() + 1e-3
    assert rep.final_estimate > 0


def test_weights_stay_clipped():
    x, y = _pair(4)
    rep = train_w_mom(x, y, TrainConfig(n_iter=50, lr=0.5, clip_c=0.02))
    assert np.abs(rep.critic.w1).max() <= 0.02 and np.abs(rep.critic.w2).max() <= 0.02


def test_identical_samples_estimate_near_zero():
    x, _ = _pair(5)
    vals = [train_w_mou_diag(x, x, TrainConfig(n_iter=300, k_x=5, k_y=5, seed=s)).final_estimate for s in range(3)]
    assert abs(np.mean(vals)) <= 0.05


def test_estimator_validation():
    x, y = _pair()
    with pytest.raises(ValidationError):
        train_w_mou_diag(x, y, TrainConfig(k_x=3, k_y=2))
    with pytest.raises(ValidationError):
        train_w_mom(x[:3], y, TrainConfig(k_x=4))
    with pytest.raises(ValidationError):
        train_w_mom(x, np.zeros((5, 3)), TrainConfig())


def test_divergence_reported():
    x, y = _pair()
    # finite weights whose products overflow on the first forward pass
    init = init_critic(2, 4, clip_c=1.0, seed=0).with_params({"w1": np.full((4, 2), 1e200), "w2": np.full(4, 1e200)})
    with pytest.raises(NumericalDivergence):
        train_critic(Sample.clean(x), y, TrainConfig(n_iter=3, clip_c=1.0), Estimator.MOM, init=init)


def test_report_csv_round_trip(tmp_path):
    x, y = _pair()
    rep = train_w_mom(x, y, TrainConfig(n_iter=12, k_x=3, k_y=3))
    header, rows = read_report_csv(rep.to_csv(tmp_path / "r.csv"))
    assert header["estimator"] == "mom" and header["config"]["k_x"] == 3
    np.testing.assert_array_equal(rows[:, 2], rep.objectives)
    assert header["final_estimate"] == rep.final_estimate


def test_rmsprop_constant_gradient_fixed_point():
    g = {"w": np.array([3.0, -0.02, 1e-4])}
    state = RmsPropState.zeros_like(g, epsilon=1e-8)
    for _ in range(1000):
        update, state = rmsprop_step(state, g)
    np.testing.assert_allclose(update["w"], np.sign(g["w"]), atol=1e-3)


def test_zero_critic_starts_at_zero():
    x, y = _pair()
    rep = train_w_mou_diag(x, y, TrainConfig(n_iter=1, k_x=3, k_y=3), init=zero_critic(2, 4))
    assert rep.objectives[0] == 0.0


def test_mou_first_objective_matches_brute_force_median():
    x, y = _pair(6, n=30, m=20)
    cfg = TrainConfig(n_iter=1, k_x=3, k_y=2, seed=11)
    net = init_critic(2, 8, seed=1)
    rep = train_w_mou(x, y, cfg, init=net)
    rng = derive_rng(11, 1, 0)
    bx, by = partition(30, 3, rng), partition(20, 2, rng)
    stats = sorted(
        np.mean([forward(net, x[i]) - forward(net, y[j]) for i in a for j in b]) for a in bx for b in by
    )
    assert rep.objectives[0] == pytest.approx(stats[2], abs=1e-12)


def test_median_block_gradient_matches_frozen_objective():
    x, y = _pair(7, n=40, m=40)
    rng = np.random.default_rng(0)
    net = CriticNet(rng.normal(size=(5, 2)), rng.normal(size=5), rng.normal(size=5), 0.3, clip_c=10.0)
    for kind in (Estimator.MOM, Estimator.MOU_DIAG, Estimator.MOU):
        spec = EstimatorSpec(kind, 4, 4)
        _, mb = objective_from_values(net(x), net(y), spec, np.random.default_rng(5))
        frozen = lambda c: mb.x_weights @ c(x) - mb.y_weights @ c(y)  # noqa: E731
        ix, iy = np.flatnonzero(mb.x_weights), np.flatnonzero(mb.y_weights)
        pts = np.concatenate([x[ix], y[iy]])
        signs = np.concatenate([mb.x_weights[ix], -mb.y_weights[iy]])
        g = grad_params(net, pts, signs).params()
        for name, value in net.params().items():
            flat = np.asarray(value, dtype=float).reshape(-1)
            for i in range(flat.size):
                up, dn = flat.copy(), flat.copy()
                up[i] += 1e-6
                dn[i] -= 1e-6
                num = (frozen(net.with_params({name: up.reshape(np.shape(value))}))
                       - frozen(net.with_params({name: dn.reshape(np.shape(value))}))) / 2e-6
                ana = np.asarray(g[name]).reshape(-1)[i]
                assert abs(num - ana) <= 1e-5 * max(1.0, abs(num))


def test_objective_bounded_by_lipschitz_times_diameter():
    x, y = _pair(8)
    both = np.concatenate([x, y])
    diam = max(np.linalg.norm(both - p, axis=1).max() for p in both)

    def check(t, net, value, mb):
        assert abs(value) <= lipschitz_bound(net) * diam + 1e-12

    train_w_mom(x, y, TrainConfig(n_iter=60, k_x=5, k_y=5), callback=check)


def test_mou_stays_bounded_under_contamination():
    from robust_w1.data import toy_dataset

    xd, yd = toy_dataset("D1", 0.05, n=200, seed=2)
    k = recommended_k(200, 0.05)
    rep = train_w_mou(xd, yd, TrainConfig(n_iter=5000, k_x=k, k_y=k, seed=2))
    assert np.all(np.isfinite(rep.objectives)) and np.abs(rep.objectives).max() < 1.0
    assert rep.final_estimate >= -0.1

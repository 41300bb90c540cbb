import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_w1.blocking import BlockScheme, SchemeKind, assign_blocks
from robust_w1.critic import init_critic
from robust_w1.data import ValidationError
from robust_w1.estimators import (
    Estimator,
    EstimatorSpec,
    PairScheme,
    critic_kernel,
    dual_objective,
    grid_statistics,
    mom_estimate,
    mou_estimate,
    objective_from_values,
)

ident = lambda p: p[:, 0]  # noqa: E731
diff = lambda a, b: a[:, 0] - b[:, 0]  # noqa: E731


def test_mom_fixed_blocks_worked_example():
    xs = np.array([1.0, 2.0, 3.0, 100.0, 5.0, 6.0])[:, None]
    blocks = np.array([[0, 1], [2, 3], [4, 5]])
    value, med = mom_estimate(xs, ident, 3, blocks=blocks)
    # block means 1.5, 51.5, 5.5: median 5.5
    assert value == 5.5
    np.testing.assert_array_equal(med, [4, 5])


def test_mom_single_block_is_mean():
    xs = np.array([[1.0], [2.0], [3.0], [4.0]])
    value, med = mom_estimate(xs, ident, 1, seed=3)
    assert value == 2.5 and sorted(med.tolist()) == [0, 1, 2, 3]


def test_mom_rejects_bad_input():
    with pytest.raises(ValidationError):
        mom_estimate(np.zeros((3, 1)), ident, 4)
    with pytest.raises(ValidationError):
        mom_estimate(np.zeros((3, 1)), lambda p: np.full(p.shape[0], np.nan), 1)


def test_mou_one_block_is_full_u_statistic():
    xs = np.array([0.0, 2.0])[:, None]
    ys = np.array([1.0, 3.0, 5.0])[:, None]
    value, pairs = mou_estimate(xs, ys, diff, 1, 1)
    assert value == pytest.approx(-2.0, abs=1e-15)
    assert pairs.shape == (6, 2)


def test_mou_grid_has_all_pair_blocks():
    rng = np.random.default_rng(0)
    xs, ys = rng.standard_normal((20, 1)), rng.standard_normal((12, 1))
    a = assign_blocks(20, BlockScheme(SchemeKind.GRID_PAIRS, 4, 3), seed=1, m=12)
    value, pairs = mou_estimate(xs, ys, diff, 4, 3, assignment=a)
    stats = grid_statistics(xs[:, 0], ys[:, 0], a.x_blocks, a.y_blocks).ravel()
    assert value == sorted(stats)[5]  # lower median of 12 statistics
    assert pairs.shape == (5 * 4, 2)


def test_mou_diag_needs_equal_counts():
    with pytest.raises(ValidationError):
        mou_estimate(np.zeros((6, 1)), np.zeros((6, 1)), diff, 3, 2, scheme=PairScheme.DIAGONAL)
    with pytest.raises(ValidationError):
        EstimatorSpec(Estimator.MOU_DIAG, 3, 2)


@given(st.integers(1, 1000), st.integers(1, 1000), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_single_block_degeneracy(n, m, seed):
    rng = np.random.default_rng(seed)
    fx, fy = rng.standard_normal(n) * 10, rng.standard_normal(m) * 10
    full = fx.mean() - fy.mean()
    for kind in Estimator:
        value, mb = objective_from_values(fx, fy, EstimatorSpec(kind), np.random.default_rng(seed))
        if kind is not Estimator.MOU_PAIRS:
            assert value == pytest.approx(full, abs=1e-12)
            assert mb.x_weights.sum() == pytest.approx(1.0)


def test_objective_weights_reproduce_value():
    rng = np.random.default_rng(5)
    fx, fy = rng.standard_normal(103), rng.standard_normal(97)
    for kind in Estimator:
        spec = EstimatorSpec(kind, 7, 7)
        value, mb = objective_from_values(fx, fy, spec, np.random.default_rng(1))
        assert value == pytest.approx(mb.x_weights @ fx - mb.y_weights @ fy, abs=1e-12)


def test_single_block_estimators_share_value():
    rng = np.random.default_rng(2)
    xs, ys = rng.standard_normal((50, 2)), rng.standard_normal((40, 2)) + 1
    net = init_critic(2, 8, seed=0)
    values = {kind: dual_objective(xs, ys, net, EstimatorSpec(kind), seed=9)[0] for kind in Estimator}
    direct = net(xs).mean() - net(ys).mean()
    for kind in (Estimator.MOM, Estimator.MOU, Estimator.MOU_DIAG):
        assert values[kind] == pytest.approx(direct, abs=1e-12)


def test_critic_kernel_is_separable():
    net = init_critic(2, 4, seed=1)
    a, b = np.ones((3, 2)), np.zeros((3, 2))
    np.testing.assert_allclose(critic_kernel(net)(a, b), net(a) - net(b))


@given(st.integers(3, 40), st.data())
@settings(max_examples=100, deadline=None)
def test_mom_breakdown_invariance(k, data):
    n_per = data.draw(st.integers(1, 5))
    n = k * n_per
    b = data.draw(st.integers(0, k // 2 - 1)) if k // 2 >= 1 else 0
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    xs = rng.standard_normal(n)
    bad = rng.choice(n, size=b, replace=False)
    blocks = np.arange(n).reshape(k, n_per)
    out = []
    for mag in (1e3, 1e9):
        z = xs.copy()
        z[bad] = mag
        out.append(mom_estimate(z[:, None], ident, k, blocks=blocks)[0])
    assert out[0] == out[1]


def test_mom_resists_heavy_tails():
    rng = np.random.default_rng(0)
    errs_mean, errs_mom = [], []
    for s in range(30):
        xs = rng.standard_cauchy(1000)[:, None]
        errs_mean.append(abs(xs.mean()))
        errs_mom.append(abs(mom_estimate(xs, ident, 50, seed=s)[0]))
    assert np.median(errs_mom) < np.median(errs_mean)

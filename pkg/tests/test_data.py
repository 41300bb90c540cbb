import math

import numpy as np
import pytest

from robust_w1.data import (
    AggregateCauchyShift,
    ContaminationSpec,
    Gaussian,
    InlierSpec,
    IsolatedUniform,
    Sample,
    ValidationError,
    gaussian_shift_w1,
    generate_sample,
    read_sample_csv,
    toy_dataset,
    true_w1_reference,
    write_sample_csv,
)
from robust_w1.exact import exact_w1

STD2 = InlierSpec(Gaussian((0.0, 0.0)), 500)
BOX = IsolatedUniform((-50.0, -50.0), (50.0, 50.0))


def test_clean_gaussian_mean():
    s = generate_sample(InlierSpec(Gaussian((5.0, 5.0)), 500), ContaminationSpec(), seed=7)
    assert s.n == 500 and s.d == 2
    assert s.inlier_mask.all()
    assert np.all(np.abs(s.points.mean(axis=0) - 5.0) <= 3 / math.sqrt(500))


def test_isolated_uniform_counts():
    s = generate_sample(STD2, ContaminationSpec(BOX, 0.1), seed=1)
    assert s.n_outliers == 50
    assert np.count_nonzero(s.inlier_mask) == 450
    out = s.points[~s.inlier_mask]
    assert np.all((out >= -50) & (out <= 50))


def test_cauchy_outliers_cluster_near_shift():
    # count is forced by round(0.04 * 500); the location check is a
    # Monte-Carlo oracle over seeds on the median outlier coordinate
    medians = []
    for seed in range(20):
        s = generate_sample(STD2, ContaminationSpec(AggregateCauchyShift((25.0, 25.0)), 0.04), seed=seed)
        assert s.n_outliers == 20
        medians.append(np.median(s.points[~s.inlier_mask], axis=0))
    medians = np.array(medians)
    assert np.all((medians >= 15) & (medians <= 35))


def test_reproducible():
    spec = ContaminationSpec(BOX, 0.1)
    assert generate_sample(STD2, spec, seed=3) == generate_sample(STD2, spec, seed=3)
    assert generate_sample(STD2, spec, seed=3) != generate_sample(STD2, spec, seed=4)


def test_clean_and_contaminated_share_inliers():
    clean = generate_sample(STD2, ContaminationSpec(), seed=11)
    dirty = generate_sample(STD2, ContaminationSpec(BOX, 0.1), seed=11)
    keep = dirty.inlier_mask
    np.testing.assert_array_equal(clean.points[keep], dirty.points[keep])


def test_points_shuffled():
    s = generate_sample(STD2, ContaminationSpec(BOX, 0.1), seed=0)
    # outliers are not all parked at the end
    assert not s.inlier_mask[:450].all()


@pytest.mark.parametrize("tau", [0.5, 0.7])
def test_rejects_majority_outliers(tau):
    with pytest.raises(ValidationError):
        ContaminationSpec(BOX, tau)


def test_rejects_empty():
    with pytest.raises(ValidationError):
        InlierSpec(Gaussian((0.0,)), 0)


def test_uniform_box_must_be_ordered():
    with pytest.raises(ValidationError):
        IsolatedUniform((0.0, 1.0), (1.0, 1.0))


def test_sample_invariants_enforced():
    with pytest.raises(ValidationError):
        Sample(np.zeros((4, 2)), [True, False, False, True], 0.5)
    with pytest.raises(ValidationError):
        Sample(np.array([[0.0, np.inf]]), [True], 0.0)
    with pytest.raises(ValidationError):
        Sample(np.zeros((10, 1)), [True] * 9 + [False], 0.0)


def test_sample_is_read_only():
    s = Sample.clean(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        s.points[0, 0] = 1.0


def test_true_reference():
    assert true_w1_reference() == pytest.approx(math.sqrt(50), abs=1e-12)
    assert gaussian_shift_w1((1.0, 2.0), (1.0, 2.0)) == 0.0


def test_mean_shift_formula_against_exact_oracle():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((400, 2))
    b = rng.standard_normal((400, 2)) + [3.0, 4.0]
    assert gaussian_shift_w1((0, 0), (3, 4)) == 5.0
    assert exact_w1(a, b) == pytest.approx(5.0, rel=0.05)
    # exact translate: identical cloud moved by (3, 4)
    assert exact_w1(a, a + [3.0, 4.0]) == pytest.approx(5.0, abs=1e-9)


def test_toy_dataset_layout():
    x, y = toy_dataset("D1", 0.1, seed=0)
    assert x.n == y.n == 500 and x.n_outliers == 50 and y.n_outliers == 0
    assert np.linalg.norm(y.points.mean(axis=0) - 5.0) < 0.3
    x2, _ = toy_dataset("D2", 0.04, seed=0)
    assert x2.n_outliers == 20
    with pytest.raises(ValidationError):
        toy_dataset("D3", 0.1)


def test_csv_round_trip(tmp_path):
    s = generate_sample(STD2, ContaminationSpec(AggregateCauchyShift((25.0, 25.0)), 0.04), seed=5)
    path = write_sample_csv(s, tmp_path / "s.csv")
    header = path.read_text().splitlines()[0]
    assert header == "x0,x1,is_inlier"
    back = read_sample_csv(path)
    np.testing.assert_array_equal(back.points, s.points)
    np.testing.assert_array_equal(back.inlier_mask, s.inlier_mask)

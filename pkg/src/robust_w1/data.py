"""Point-cloud samples, the contamination model and the 2D toy datasets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def outlier_count(n, tau):
    """Number of outliers injected for a sample of size ``n`` at proportion ``tau``."""
    return int(math.floor(tau * n + 0.5))


@dataclass(frozen=True, eq=False)
class Sample:
    """A labelled point cloud.

    Parameters
    ----------
    points : ndarray of shape (n, d)
        Observations, inliers and outliers mixed.
    inlier_mask : ndarray of bool, shape (n,)
        ``True`` where the point was drawn from the inlier distribution.
    tau : float
        Nominal outlier proportion the sample was generated with.
    """

    points: np.ndarray
    inlier_mask: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValidationError(f"points must be a non-empty (n, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points must be finite")
        mask = np.array(self.inlier_mask, dtype=bool, copy=True).reshape(-1)
        if mask.shape[0] != pts.shape[0]:
            raise ValidationError("inlier_mask length must equal the number of points")
        if not 0.0 <= self.tau < 0.5:
            raise ValidationError(f"tau must lie in [0, 0.5), got {self.tau}")
        n_out = int(np.count_nonzero(~mask))
        if n_out != outlier_count(pts.shape[0], self.tau) or 2 * n_out >= pts.shape[0]:
            raise ValidationError(
                f"{n_out} outliers is inconsistent with tau={self.tau} and n={pts.shape[0]}"
            )
        pts.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "inlier_mask", mask)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def n_outliers(self):
        return int(np.count_nonzero(~self.inlier_mask))

    @classmethod
    def clean(cls, points):
        """Wrap a plain array as an all-inlier sample."""
        pts = np.asarray(points, dtype=np.float64)
        return cls(pts, np.ones(pts.shape[0], dtype=bool), 0.0)

    def inliers(self):
        return self.points[self.inlier_mask]

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.tau == other.tau
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.inlier_mask, other.inlier_mask)
        )

    __hash__ = None


@dataclass(frozen=True)
class Gaussian:
    """Isotropic Gaussian ``N(mean, scale**2 I)``."""

    mean: tuple
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in np.atleast_1d(self.mean)))
        if not self.scale > 0:
            raise ValidationError("scale must be positive")

    @property
    def d(self):
        return len(self.mean)

    def draw(self, rng, size):
        return np.asarray(self.mean) + self.scale * rng.standard_normal((size, self.d))


@dataclass(frozen=True)
class InlierSpec:
    kind: Gaussian
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("sample size must be at least 1")


@dataclass(frozen=True)
class IsolatedUniform:
    """Uniform anomalies on the box ``[low, high]``."""

    low: tuple
    high: tuple

    def __post_init__(self):
        low = tuple(float(v) for v in np.atleast_1d(self.low))
        high = tuple(float(v) for v in np.atleast_1d(self.high))
        if len(low) != len(high) or not all(a < b for a, b in zip(low, high)):
            raise ValidationError("IsolatedUniform needs low < high component-wise")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def d(self):
        return len(self.low)

    def draw(self, rng, size):
        return rng.uniform(self.low, self.high, size=(size, self.d))


@dataclass(frozen=True)
class AggregateCauchyShift:
    """Independent standard Cauchy coordinates translated by ``shift``."""

    shift: tuple

    def __post_init__(self):
        object.__setattr__(self, "shift", tuple(float(v) for v in np.atleast_1d(self.shift)))

    @property
    def d(self):
        return len(self.shift)

    def draw(self, rng, size):
        return np.asarray(self.shift) + rng.standard_cauchy((size, self.d))


@dataclass(frozen=True)
class ContaminationSpec:
    kind: IsolatedUniform | AggregateCauchyShift | None = None
    tau: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.tau < 0.5:
            raise ValidationError(f"tau must lie in [0, 0.5), got {self.tau}")
        if self.kind is None and self.tau > 0:
            raise ValidationError("a positive tau needs a contamination distribution")


NO_CONTAMINATION = ContaminationSpec()


def generate_sample(inliers, contamination=NO_CONTAMINATION, seed=0):
    """Draw a contaminated sample.

    Exactly ``round(tau * n)`` points come from the anomaly distribution, the
    rest from the inlier Gaussian, and the concatenation is shuffled.
    """
    if not isinstance(inliers, InlierSpec):
        raise ValidationError("inliers must be an InlierSpec")
    if not isinstance(contamination, ContaminationSpec):
        raise ValidationError("contamination must be a ContaminationSpec")
    n = inliers.n
    n_out = outlier_count(n, contamination.tau)
    if 2 * n_out >= n:
        raise ValidationError(f"{n_out} outliers out of {n} points is not a minority")
    if contamination.kind is not None and contamination.kind.d != inliers.kind.d:
        raise ValidationError("inlier and anomaly distributions differ in dimension")

    # Separate streams: for a fixed seed, samples that differ only in tau
    # share their inliers and their shuffle, so contaminated and clean
    # versions are paired point for point.
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_in, s_out, s_perm = (
        np.random.default_rng(np.random.SeedSequence(seq.entropy, spawn_key=seq.spawn_key + (i,)))
        for i in range(3)
    )
    points = inliers.kind.draw(s_in, n)
    if n_out:
        points[n - n_out:] = contamination.kind.draw(s_out, n_out)
    mask = np.arange(n) < n - n_out
    order = s_perm.permutation(n)
    return Sample(points[order], mask[order], contamination.tau)


# Toy pair: X inliers N(0, I2), Y ~ N(5 * 1, I2).
TOY_N = 500
TOY_SHIFT = 5.0


def toy_anomaly(dataset):
    """Anomaly distribution of toy dataset ``"D1"`` (isolated) or ``"D2"`` (aggregate)."""
    if dataset == "D1":
        return IsolatedUniform((-50.0, -50.0), (50.0, 50.0))
    if dataset == "D2":
        return AggregateCauchyShift((25.0, 25.0))
    raise ValidationError(f"unknown toy dataset {dataset!r}")


def toy_dataset(dataset, tau_x, n=TOY_N, seed=0, tau_y=0.0):
    """Return ``(X, Y)`` for toy dataset D1 or D2.

    ``X`` is a standard 2D Gaussian polluted at rate ``tau_x``; ``Y`` is
    ``N((5, 5), I2)``, clean unless ``tau_y`` is given.
    """
    anomaly = toy_anomaly(dataset)
    ss = np.random.SeedSequence(seed)
    sx, sy = ss.spawn(2)
    x = generate_sample(
        InlierSpec(Gaussian((0.0, 0.0)), n),
        ContaminationSpec(anomaly if tau_x > 0 else None, tau_x),
        sx,
    )
    y = generate_sample(
        InlierSpec(Gaussian((TOY_SHIFT, TOY_SHIFT)), n),
        ContaminationSpec(anomaly if tau_y > 0 else None, tau_y),
        sy,
    )
    return x, y


def gaussian_shift_w1(mean_a, mean_b):
    # W1 between two translates of one measure is the translation length.
    return float(np.linalg.norm(np.asarray(mean_a, float) - np.asarray(mean_b, float)))


def true_w1_reference():
    """W1 between N(0, I2) and N((5, 5), I2), i.e. sqrt(50)."""
    return gaussian_shift_w1((0.0, 0.0), (TOY_SHIFT, TOY_SHIFT))


def write_sample_csv(sample, path):
    path = Path(path)
    header = [f"x{j}" for j in range(sample.d)] + ["is_inlier"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, ok in zip(sample.points, sample.inlier_mask):
            writer.writerow([f"{v:.17g}" for v in row] + [int(ok)])
    return path


def read_points_csv(path):
    """Read a point CSV; returns ``(points, inlier_mask or None)``.

    Accepts files written by :func:`write_sample_csv` as well as bare
    coordinate tables with an ``x0, x1, ...`` header.
    """
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValidationError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    coord_cols = [i for i, h in enumerate(header) if h.startswith("x")]
    if not coord_cols:
        raise ValidationError(f"{path}: header has no x0..x{{d-1}} columns")
    try:
        pts = np.array([[float(r[i]) for i in coord_cols] for r in rows[1:]], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed row ({exc})") from None
    mask = None
    if "is_inlier" in header:
        col = header.index("is_inlier")
        mask = np.array([r[col].strip() in ("1", "True", "true") for r in rows[1:]])
    return pts, mask


def read_sample_csv(path, tau=None):
    pts, mask = read_points_csv(path)
    if mask is None:
        mask = np.ones(pts.shape[0], dtype=bool)
    if tau is None:
        tau = float(np.count_nonzero(~mask)) / pts.shape[0]
    return Sample(pts, mask, tau)

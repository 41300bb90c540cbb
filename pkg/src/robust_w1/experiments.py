"""Toy experiment drivers: K sweeps, convergence traces, rate traces and plots.

Every driver returns rows as plain dicts and can write them to CSV; each
row carries the seed that regenerates it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import kendalltau

from .blocking import partition, recommended_k
from .data import (
    ContaminationSpec,
    Gaussian,
    InlierSpec,
    IsolatedUniform,
    ValidationError,
    generate_sample,
    toy_dataset,
    true_w1_reference,
)
from .estimators import Estimator
from .exact import exact_w1
from .optim import TRAINERS, TrainConfig, derive_rng

DEFAULT_KS = (1, 2, 5, 10, 20, 50, 70, 100, 150, 224)

# critic training defaults used by the toy experiments
EXPERIMENT_TRAINING = {"lr": 1e-3, "clip_biases": True, "hidden": 64, "clip_c": 0.01}

SWEEP_FIELDS = ["dataset", "estimator", "tau", "k", "repeat", "seed", "estimate", "reference", "abs_error"]
SUMMARY_FIELDS = ["dataset", "estimator", "tau", "k", "n_repeats", "mean", "q25", "q75"]
CONVERGENCE_FIELDS = ["k", "epoch", "objective_mean"]
RATE_FIELDS = ["n", "repeat", "seed", "n_outliers", "k", "estimate", "reference", "abs_error"]


@dataclass(frozen=True)
class SweepSpec:
    """Grid of ``(tau, K, repeat)`` cells for one dataset and estimator.

    Repeat ``r`` uses seed ``base_seed + r`` for both the data and the
    critic, so the clean reference of a repeat is paired with all of its
    contaminated cells.
    """

    dataset: str = "D1"
    estimator: Estimator = Estimator.MOU_DIAG
    taus: tuple = (0.0, 0.1)
    ks: tuple = DEFAULT_KS
    repeats: int = 20
    base_seed: int = 0
    epochs: float = 100
    n: int = 500
    training: dict = field(default_factory=lambda: dict(EXPERIMENT_TRAINING))

    def __post_init__(self):
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        if self.dataset not in ("D1", "D2"):
            raise ValidationError(f"unknown dataset {self.dataset!r}")
        if self.estimator is Estimator.MOU_PAIRS:
            raise ValidationError("sweeps support mom, mou and mou-diag")
        if self.repeats < 1:
            raise ValidationError("repeats must be at least 1")
        if not self.taus or any(not 0.0 <= t < 0.5 for t in self.taus):
            raise ValidationError("every tau must lie in [0, 0.5)")
        if not self.ks or any(k < 1 or k > self.n for k in self.ks):
            raise ValidationError(f"every K must lie in [1, {self.n}]")
        if self.epochs <= 0:
            raise ValidationError("epochs must be positive")

    def seed(self, repeat):
        return self.base_seed + repeat

    def config(self, k, seed):
        return TrainConfig.for_epochs(self.epochs, k, seed=seed, **self.training)


def _train(spec, x, y, k, seed):
    return TRAINERS[spec.estimator](x, y, spec.config(k, seed))


def clean_reference(spec, seed):
    """Plain (K = 1) estimate on the uncontaminated pair of a repeat."""
    x, y = toy_dataset(spec.dataset, 0.0, n=spec.n, seed=seed)
    return _train(spec, x, y, 1, seed).final_estimate


def run_k_sweep(spec, out_path=None, summary_path=None, progress=None):
    """Absolute deviation from the clean reference for every ``(tau, K, repeat)``.

    Rows are appended to ``out_path`` as they are produced, so an aborted
    sweep leaves its finished cells on disk. Returns ``(rows, summary)``.
    """
    rows = []
    writer = _RowWriter(out_path, SWEEP_FIELDS)
    try:
        for r in range(spec.repeats):
            seed = spec.seed(r)
            ref = clean_reference(spec, seed)
            for tau in spec.taus:
                x, y = toy_dataset(spec.dataset, tau, n=spec.n, seed=seed)
                for k in spec.ks:
                    est = _train(spec, x, y, k, seed).final_estimate
                    row = {"dataset": spec.dataset, "estimator": spec.estimator.value, "tau": tau, "k": k,
                           "repeat": r, "seed": seed, "estimate": est, "reference": ref,
                           "abs_error": abs(est - ref)}
                    rows.append(row)
                    writer.write(row)
                    if progress:
                        progress(row)
    finally:
        writer.close()
    summary = summarize_sweep(rows)
    if summary_path is not None:
        write_csv(summary_path, summary, SUMMARY_FIELDS)
    return rows, summary


def summarize_sweep(rows):
    """Mean and 25%/75% quantiles of ``abs_error`` per ``(dataset, estimator, tau, k)``."""
    groups = {}
    for row in rows:
        key = (row["dataset"], row["estimator"], float(row["tau"]), int(row["k"]))
        groups.setdefault(key, []).append(float(row["abs_error"]))
    out = []
    for (ds, est, tau, k), errs in sorted(groups.items()):
        q25, q75 = np.quantile(errs, [0.25, 0.75])
        out.append({"dataset": ds, "estimator": est, "tau": tau, "k": k, "n_repeats": len(errs),
                    "mean": float(np.mean(errs)), "q25": float(q25), "q75": float(q75)})
    return out


@dataclass
class ConvergenceResult:
    rows: list
    plateaus: dict  # k -> mean final estimate over repeats
    reference: float  # mean clean K = 1 plateau
    traces: dict = field(repr=False, default_factory=dict)


def run_convergence(spec, tau=None, out_path=None, progress=None):
    """Objective traces against epochs, averaged over repeats, for each K.

    ``tau`` defaults to the single entry of ``spec.taus``. The clean K = 1
    plateau is returned alongside as the reference level.
    """
    if tau is None:
        if len(spec.taus) != 1:
            raise ValidationError("convergence runs need a single tau")
        tau = spec.taus[0]
    if not 0.0 <= tau < 0.5:
        raise ValidationError("tau must lie in [0, 0.5)")
    traces, finals, refs = {}, {}, []
    for r in range(spec.repeats):
        seed = spec.seed(r)
        x, y = toy_dataset(spec.dataset, tau, n=spec.n, seed=seed)
        for k in spec.ks:
            rep = _train(spec, x, y, k, seed)
            traces.setdefault(k, []).append(rep.objectives)
            finals.setdefault(k, []).append(rep.final_estimate)
            if k == 1 and tau == 0.0:
                refs.append(rep.final_estimate)
            if progress:
                progress({"k": k, "repeat": r, "final": rep.final_estimate})
        if not (1 in spec.ks and tau == 0.0):
            refs.append(clean_reference(spec, seed))

    rows, mean_traces = [], {}
    for k in spec.ks:
        mean = np.mean(np.vstack(traces[k]), axis=0)
        mean_traces[k] = mean
        rows += [{"k": k, "epoch": t / k, "objective_mean": float(v)} for t, v in enumerate(mean)]
    if out_path is not None:
        write_csv(out_path, rows, CONVERGENCE_FIELDS)
    plateaus = {k: float(np.mean(v)) for k, v in finals.items()}
    return ConvergenceResult(rows, plateaus, float(np.mean(refs)), mean_traces)


def _rate_sample(n, n_outliers, seed, repeat):
    """``n`` points from N(0, I2) with ``n_outliers`` uniform box outliers, and a clean N((5,5), I2) sample."""
    sx, sy = (np.random.SeedSequence(seed, spawn_key=(n, repeat, i)) for i in (0, 1))
    tau = n_outliers / n
    box = IsolatedUniform((-50.0, -50.0), (50.0, 50.0))
    # the realised count must match n_outliers exactly
    x = generate_sample(InlierSpec(Gaussian((0.0, 0.0)), n), ContaminationSpec(box if n_outliers else None, tau), sx)
    if x.n_outliers != n_outliers:
        raise ValidationError(f"could not place {n_outliers} outliers among {n} points")
    y = generate_sample(InlierSpec(Gaussian((5.0, 5.0)), n), ContaminationSpec(), sy)
    return x, y


def median_block_w1(xs, ys, k, rng):
    """Exact W1 between the concatenated central blocks of a diagonal partition.

    Both samples are cut into ``k`` blocks; block pairs are ranked by their
    own exact W1 and the central half of the ranking (at least the median
    pair) is kept, which leaves out pairs inflated or deflated by outliers.
    """
    bx, by = partition(xs.shape[0], k, rng), partition(ys.shape[0], k, rng)
    if k == 1:
        return exact_w1(xs[bx[0]], ys[by[0]])
    per_block = np.array([exact_w1(xs[a], ys[b]) for a, b in zip(bx, by)])
    order = np.argsort(per_block, kind="stable")
    lo, hi = k // 4, k - k // 4
    keep = order[lo:hi] if hi > lo else order[[(k - 1) // 2]]
    return exact_w1(xs[bx[keep].ravel()], ys[by[keep].ravel()])


@dataclass
class RateResult:
    rows: list
    mean_errors: dict  # n -> mean abs error
    slope: float
    kendall: float


def rate_outliers(n, tau):
    """Outlier count for a rate trace: ``ceil(sqrt(n))``, or none when ``tau == 0``."""
    return 0 if tau == 0 else math.ceil(math.sqrt(n))


def run_rate_trace(ns, tau=0.1, repeats=5, seed=0, out_path=None, progress=None):
    """Error of the median-block exact estimate against the true distance as n grows.

    Parameters
    ----------
    ns : sequence of int
        Strictly increasing sample sizes.
    tau : float
        Largest contamination fraction the design must tolerate. ``tau = 0``
        runs the clean single-block baseline; otherwise each sample carries
        ``ceil(sqrt(n))`` outliers, which must not exceed ``tau * n``, and the
        block count is ``recommended_k`` at the realised fraction.
    repeats : int
    seed : int
        Repeat ``r`` at size ``n`` uses the stream ``(seed, n, r)``.

    Returns
    -------
    RateResult
        Per-repeat rows, mean error per n, the fitted slope of
        ``log(mean error)`` on ``log(n)`` and the Kendall tau between n and
        the negated mean errors (positive when errors shrink).
    """
    ns = [int(n) for n in ns]
    if len(ns) < 2 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValidationError("ns must be strictly increasing with at least two entries")
    if not 0.0 <= tau < 0.5 or repeats < 1:
        raise ValidationError("need 0 <= tau < 0.5 and repeats >= 1")
    truth = true_w1_reference()
    rows = []
    for n in ns:
        n_out = rate_outliers(n, tau)
        if n_out > tau * n:
            raise ValidationError(f"n={n} too small: {n_out} outliers exceed tau * n = {tau * n:g}")
        k = 1 if n_out == 0 else recommended_k(n, n_out / n)
        if k > n // 2 and n_out:
            raise ValidationError(f"n={n} too small for blocking with K={k}")
        for r in range(repeats):
            x, y = _rate_sample(n, n_out, seed, r)
            est = median_block_w1(x.points, y.points, k, derive_rng(seed, n, r, 2))
            row = {"n": n, "repeat": r, "seed": seed, "n_outliers": n_out, "k": k,
                   "estimate": est, "reference": truth, "abs_error": abs(est - truth)}
            rows.append(row)
            if progress:
                progress(row)
    if out_path is not None:
        write_csv(out_path, rows, RATE_FIELDS)
    means = {n: float(np.mean([r["abs_error"] for r in rows if r["n"] == n])) for n in ns}
    slope, kt = rate_statistics(means)
    return RateResult(rows, means, slope, kt)


def rate_statistics(mean_errors):
    """Log-log slope and Kendall tau of ``(n, -error)`` for a ``{n: mean error}`` map."""
    ns = np.array(sorted(mean_errors), dtype=float)
    errs = np.array([mean_errors[n] for n in sorted(mean_errors)])
    if np.any(errs <= 0):
        raise ValidationError("mean errors must be positive for a log-log fit")
    slope = float(np.polyfit(np.log(ns), np.log(errs), 1)[0])
    return slope, float(kendalltau(ns, -errs).statistic)


# --- CSV helpers -----------------------------------------------------------


class _RowWriter:
    """Streams dict rows to a CSV file, flushing after each row."""

    def __init__(self, path, fields):
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", newline="")
            self._w = csv.DictWriter(self._fh, fieldnames=fields, extrasaction="ignore")
            self._w.writeheader()

    def write(self, row):
        if self._fh is not None:
            self._w.writerow(_fmt(row))
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _fmt(row):
    return {k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()}


def write_csv(path, rows, fields):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(_fmt(row))
    return path


def read_csv(path):
    """Read a CSV written by this module; numeric fields come back as numbers."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k, v in row.items():
            try:
                row[k] = int(v)
            except (TypeError, ValueError):
                try:
                    row[k] = float(v)
                except (TypeError, ValueError):
                    pass
    return rows


# --- plots -----------------------------------------------------------------


def _require(rows, fields, path):
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    missing = [f for f in fields if f not in rows[0]]
    if missing:
        raise ValidationError(f"{path}: missing columns {missing}")


def detect_kind(path):
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    if {"k", "epoch", "objective_mean"} <= set(header):
        return "convergence"
    if {"n", "abs_error"} <= set(header):
        return "rate"
    if {"dataset", "tau", "k", "abs_error"} <= set(header):
        return "sweep"
    if {"dataset", "tau", "k", "mean", "q25", "q75"} <= set(header):
        return "summary"
    raise ValidationError(f"{path}: unrecognised CSV layout {header}")


def emit_plots(csv_paths, out_dir):
    """Render each CSV as a PNG line plot; returns the written image paths.

    Sweep tables give one image per dataset (mean error against K, one
    curve per tau with a 25-75% band); convergence tables give one image
    with a curve per K; rate tables give a log-log plot of error against n.
    All inputs are validated before anything is written.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    jobs = []
    for p in [Path(p) for p in csv_paths]:
        kind = detect_kind(p)
        rows = read_csv(p)
        need = {"sweep": SWEEP_FIELDS[:4] + ["abs_error"], "summary": SUMMARY_FIELDS,
                "convergence": CONVERGENCE_FIELDS, "rate": ["n", "abs_error"]}[kind]
        _require(rows, need, p)
        jobs.append((p, kind, rows))

    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for p, kind, rows in jobs:
        if kind in ("sweep", "summary"):
            summary = summarize_sweep(rows) if kind == "sweep" else rows
            for ds in sorted({r["dataset"] for r in summary}):
                fig, ax = plt.subplots(figsize=(5, 3.5))
                for tau in sorted({r["tau"] for r in summary if r["dataset"] == ds}):
                    sel = sorted((r for r in summary if r["dataset"] == ds and r["tau"] == tau), key=lambda r: r["k"])
                    ks = [r["k"] for r in sel]
                    ax.plot(ks, [r["mean"] for r in sel], marker="o", ms=3, label=f"tau={tau:g}")
                    ax.fill_between(ks, [r["q25"] for r in sel], [r["q75"] for r in sel], alpha=0.2)
                ax.set_xlabel("number of blocks K")
                ax.set_ylabel("absolute deviation")
                ax.set_title(f"{ds}: {sel[0]['estimator']}")
                ax.legend()
                written.append(_save(fig, out_dir / f"{p.stem}_{ds}.png", plt))
        elif kind == "convergence":
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for k in sorted({r["k"] for r in rows}):
                sel = [r for r in rows if r["k"] == k]
                ax.plot([r["epoch"] for r in sel], [r["objective_mean"] for r in sel], lw=1, label=f"K={k}")
            ax.set_xlabel("epoch")
            ax.set_ylabel("objective")
            ax.legend()
            written.append(_save(fig, out_dir / f"{p.stem}.png", plt))
        else:
            ns = sorted({r["n"] for r in rows})
            errs = [np.mean([r["abs_error"] for r in rows if r["n"] == n]) for n in ns]
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.loglog(ns, errs, marker="o")
            ax.set_xlabel("n")
            ax.set_ylabel("mean absolute error")
            written.append(_save(fig, out_dir / f"{p.stem}.png", plt))
    return written


def _save(fig, path, plt):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

"""Monte Carlo corank experiments.

Sample ``i`` always uses RNG stream ``i``, and the per-sample results are
reassembled in index order, so histograms and CSV files depend only on the
seed and sample count, never on ``workers``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import gfp
from .errors import ThresholdOutOfRange
from .limits import CorankLaw, limiting_law, num_surjections, zero_column_probability
from .samplers import MatrixEnsemble, TwoPointGrid, alpha_n, sample_array

log = logging.getLogger(__name__)

OVERFLOW_BITS = 300
BLOCK = 256

SWEEP_COLUMNS = [
    "c", "n", "p", "samples", "seed", "tv", "zero_line_freq", "zero_line_exact",
    "moment_r", "moment_mean", "moment_stderr", "status",
]


@dataclass
class CorankHistogram:
    p: int
    n: int
    counts: dict[int, int]
    samples: int
    seed: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.samples:
            raise ValueError("counts do not add up to the sample count")
        if any(not 0 <= k <= self.n for k in self.counts):
            raise ValueError("coranks must lie in [0, n]")

    def frequency(self, k: int) -> float:
        return self.counts.get(k, 0) / self.samples

    def to_law(self) -> CorankLaw:
        kmax = max(self.counts, default=0)
        probs = {k: self.frequency(k) for k in range(kmax + 1)}
        return CorankLaw(self.p, probs, kmax, 0.0, label="empirical")


@dataclass
class ExperimentConfig:
    """What to sample and how much; the sweep axes are only used by ``threshold_sweep``."""

    ensemble: MatrixEnsemble
    samples: int
    r_list: Sequence[int] = ()
    c_list: Sequence[float] = ()
    n_list: Sequence[int] = ()
    workers: int = 1
    output: str | None = None

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if any(c <= 0 for c in self.c_list):
            raise ValueError("every c must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class SampleRun:
    """Per-sample outcomes, indexed by stream."""

    ensemble: MatrixEnsemble
    coranks: np.ndarray
    zero_column: np.ndarray

    def histogram(self) -> CorankHistogram:
        ks, cs = np.unique(self.coranks, return_counts=True)
        counts = {int(k): int(c) for k, c in zip(ks, cs)}
        return CorankHistogram(self.ensemble.p, self.ensemble.n, counts, len(self.coranks), self.ensemble.seed)


def _one_sample(ens: MatrixEnsemble, stream: int) -> tuple[int, bool]:
    a = sample_array(ens, stream)
    if ens.p == 2:
        rk = gfp.bits_rank(a)
    else:
        rk = gfp.rank_generic(gfp.FpMatrix(ens.p, a))
    zero_col = bool((~a.any(axis=0)).any())
    return ens.n - rk, zero_col


def _run_block(ens: MatrixEnsemble, start: int, stop: int):
    out = [_one_sample(ens, s) for s in range(start, stop)]
    log.info("samples %d-%d done (n=%d)", start, stop - 1, ens.n)
    return start, out


def simulate(ens: MatrixEnsemble, samples: int, workers: int = 1) -> SampleRun:
    """Draw ``samples`` matrices (streams ``0..samples-1``) and record corank and zero columns."""
    coranks = np.empty(samples, dtype=np.int64)
    zero = np.empty(samples, dtype=bool)
    blocks = [(s, min(samples, s + BLOCK)) for s in range(0, samples, BLOCK)]

    def store(result):
        start, rows = result
        for i, (k, z) in enumerate(rows):
            coranks[start + i] = k
            zero[start + i] = z

    if workers == 1:
        for b in blocks:
            store(_run_block(ens, *b))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(lambda b: _run_block(ens, *b), blocks):
                store(res)
    return SampleRun(ens, coranks, zero)


def run_corank(config: ExperimentConfig) -> CorankHistogram:
    """Empirical corank histogram of ``config.samples`` draws."""
    return simulate(config.ensemble, config.samples, config.workers).histogram()


def _as_dist(x) -> tuple[dict[int, float], float]:
    if isinstance(x, CorankHistogram):
        return {k: c / x.samples for k, c in x.counts.items()}, 0.0
    if isinstance(x, CorankLaw):
        return dict(x.probs), x.tail_mass
    raise TypeError(f"expected a histogram or a law, got {type(x).__name__}")


def tv_distance(a, b) -> float:
    """Total variation distance between corank distributions.

    Either side may be a ``CorankHistogram`` or a ``CorankLaw``. Mass in a
    law's truncated tail is counted as fully disagreeing, so the value is
    an upper bound whenever a tail is present.
    """
    da, ta = _as_dist(a)
    db, tb = _as_dist(b)
    if a.p != b.p:
        raise ValueError("distributions are over different fields")
    keys = set(da) | set(db)
    s = math.fsum(abs(da.get(k, 0.0) - db.get(k, 0.0)) for k in keys)
    return min(1.0, max(0.0, 0.5 * s + 0.5 * (ta + tb)))


class MomentEstimate(NamedTuple):
    mean: float
    stderr: float
    overflow_events: int = 0

    @property
    def valid(self) -> bool:
        return self.overflow_events == 0


def moment_from_histogram(hist: CorankHistogram, r: int) -> MomentEstimate:
    """Sample mean and standard error of ``#Sur(F_p^corank, F_p^r)``."""
    if r < 0:
        raise ValueError("r must be non-negative")
    if r == 0:
        return MomentEstimate(1.0, 0.0)
    lp = math.log2(hist.p)
    vals, weights, overflow = [], [], 0
    for k, cnt in sorted(hist.counts.items()):
        if k * r * lp > OVERFLOW_BITS:
            overflow += cnt
            continue
        vals.append(float(num_surjections(hist.p, k, r)))
        weights.append(cnt)
    if overflow:
        return MomentEstimate(math.nan, math.nan, overflow)
    v = np.array(vals)
    w = np.array(weights, dtype=float)
    N = hist.samples
    mean = float(np.dot(w, v) / N)
    if N < 2:
        return MomentEstimate(mean, math.nan)
    var = float(np.dot(w, (v - mean) ** 2) / (N - 1))
    return MomentEstimate(mean, math.sqrt(var / N))


def moment_estimate(config: ExperimentConfig, r: int) -> MomentEstimate:
    """Estimate ``E #Sur(cok A, F_p^r)`` from a fresh run of ``config``."""
    if r == 0:
        return MomentEstimate(1.0, 0.0)
    return moment_from_histogram(run_corank(config), r)


def two_point_ensemble(p: int, n: int, c: float, seed: int, t: int = 1, clamp: bool = False) -> MatrixEnsemble:
    """All entries ``0`` w.p. ``1 - c ln(n)/n`` and ``t`` otherwise."""
    return MatrixEnsemble(p, n, TwoPointGrid.constant(n, alpha_n(c, n, p, clamp), t), seed)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


@dataclass
class SweepResult:
    rows: list[dict]
    errors: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(row.get(col)) for col in SWEEP_COLUMNS])
        return buf.getvalue()


def threshold_sweep(config: ExperimentConfig, t: int = 1) -> SweepResult:
    """Run the two-point ensemble at ``alpha = c ln(n)/n`` for every ``(c, n)`` pair.

    Each cell reports the TV distance to the limiting law, the observed and
    exact probability of a zero column, and one row per requested moment.
    Cells where ``alpha`` is out of range are kept with status set to the
    error name.
    """
    if not config.c_list or not config.n_list:
        raise ValueError("the sweep needs non-empty c and n lists")
    p, seed = config.ensemble.p, config.ensemble.seed
    law = limiting_law(p)
    rows, errors = [], []
    for c in config.c_list:
        for n in config.n_list:
            base = {"c": float(c), "n": int(n), "p": p, "samples": config.samples, "seed": seed}
            try:
                ens = two_point_ensemble(p, n, c, seed, t)
            except ThresholdOutOfRange as exc:
                errors.append(f"c={c} n={n}: {exc}")
                rows.append({**base, "status": "ThresholdOutOfRange"})
                continue
            run = simulate(ens, config.samples, config.workers)
            hist = run.histogram()
            base.update(
                tv=tv_distance(hist, law),
                zero_line_freq=float(run.zero_column.mean()),
                zero_line_exact=zero_column_probability(n, ens.law.alpha),
                status="ok",
            )
            if not config.r_list:
                rows.append(base)
            for r in config.r_list:
                est = moment_from_histogram(hist, r)
                rows.append({**base, "moment_r": r, "moment_mean": est.mean, "moment_stderr": est.stderr,
                             "status": "ok" if est.valid else "overflow"})
    return SweepResult(rows, errors)


def histogram_csv(hist: CorankHistogram, law: CorankLaw | None = None) -> str:
    """``k, count, frequency, limit_probability`` for ``k = 0..max observed``."""
    law = law if law is not None else limiting_law(hist.p)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "count", "frequency", "limit_probability"])
    for k in range(max(hist.counts) + 1):
        w.writerow([k, hist.counts.get(k, 0), repr(hist.frequency(k)), repr(law[k])])
    return buf.getvalue()

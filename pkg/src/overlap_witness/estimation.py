"""Finite-statistics side of the experiment.

Event sampling, detector effects (uniform loss, approximate number-resolving
detection), overlap estimation with Poisson-bootstrap error bars, total
variation distance and HOM dip fitting.

Seeds: every random stage draws from ``substream(seed, *key)``, a generator
built on ``SeedSequence(seed, spawn_key=key)``.  Bootstrap resample ``i``
uses key ``(BOOTSTRAP, i)`` so results do not depend on evaluation order.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .geometry import OverlapTriple
from .interference import (
    PAIRS,
    OutputDistribution,
    UndefinedOverlapError,
    dip_curve,
)

# spawn-key roots of the random sub-streams
SAMPLING, LOSS, ANRD, BOOTSTRAP = 0, 1, 2, 3

DEFAULT_ANRD_SURVIVAL = 0.5


def substream(seed, *key: int) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass
class EventCounts:
    patterns: list
    counts: np.ndarray
    tags: list
    bunched: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.bunched = np.asarray(self.bunched, dtype=bool)
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def like(cls, dist: OutputDistribution, counts) -> "EventCounts":
        return cls(list(dist.patterns), counts, list(dist.tags), dist.bunched.copy())

    def replace(self, counts) -> "EventCounts":
        return EventCounts(self.patterns, counts, self.tags, self.bunched)

    def mask(self, pair: str, bunched: bool | None = None) -> np.ndarray:
        m = np.array([tag == pair for tag in self.tags])
        if bunched is not None:
            m &= self.bunched == bunched
        return m

    def empirical(self) -> OutputDistribution:
        if self.n == 0:
            raise ValueError("no events recorded")
        return OutputDistribution(self.patterns, self.counts / self.n, self.tags, self.bunched)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pattern", "count"])
            for pattern, count in zip(self.patterns, self.counts):
                w.writerow(["-".join(map(str, pattern)), int(count)])


def sample_events(dist: OutputDistribution, n: int, seed) -> EventCounts:
    """Multinomial draw of ``n`` three-photon events."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = np.clip(dist.probabilities, 0.0, None)
    counts = substream(seed, SAMPLING).multinomial(n, p / p.sum())
    return EventCounts.like(dist, counts)


def apply_losses(counts: EventCounts, efficiency: float, seed) -> EventCounts:
    """Keep an event only if all three photons are detected."""
    if not 0.0 < efficiency <= 1.0:
        raise ValueError("efficiency must lie in (0, 1]")
    if efficiency == 1.0:
        return counts.replace(counts.counts.copy())
    kept = substream(seed, LOSS).binomial(counts.counts, efficiency ** 3)
    return counts.replace(kept)


def anrd_survival(pattern, survival: float = DEFAULT_ANRD_SURVIVAL) -> float:
    """Probability that a pattern is recorded as a full threefold event.

    A doubly-occupied mode resolves when its two photons hit different
    detectors behind the extra splitter; three photons in one mode never do.
    """
    p = 1.0
    for n in Counter(pattern).values():
        if n == 2:
            p *= survival
        elif n > 2:
            return 0.0
    return p


def apply_anrd(counts: EventCounts, seed, survival: float = DEFAULT_ANRD_SURVIVAL) -> EventCounts:
    keep = np.array([anrd_survival(p, survival) for p in counts.patterns])
    kept = substream(seed, ANRD).binomial(counts.counts, keep)
    return counts.replace(kept)


@dataclass(frozen=True)
class EstimatedTriple:
    triple: OverlapTriple
    sigma: tuple[float, float, float]
    raw: tuple[float, float, float]
    clamped: tuple[bool, bool, bool]
    bootstrap_m: int
    seed: int | None = None
    anrd_corrected: bool = False
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def covariance(self) -> np.ndarray:
        if self.samples is None or len(self.samples) < 2:
            return np.diag(np.square(self.sigma))
        finite = self.samples[np.all(np.isfinite(self.samples), axis=1)]
        return np.cov(finite, rowvar=False)

    def to_dict(self) -> dict:
        return {
            "overlaps": dict(zip(PAIRS, self.triple)),
            "raw": dict(zip(PAIRS, self.raw)),
            "sigma": dict(zip(PAIRS, self.sigma)),
            "clamped": dict(zip(PAIRS, self.clamped)),
            "bootstrap": {"m": self.bootstrap_m, "law": "poisson", "seed": self.seed},
            "anrd_corrected": self.anrd_corrected,
        }


def _raw_overlaps(counts: np.ndarray, masks: dict, weight: float) -> np.ndarray:
    """Estimator on a ``(..., n_patterns)`` count array; NaN where undefined."""
    out = []
    for pair in PAIRS:
        b = counts[..., masks[pair, True]].sum(axis=-1) * weight
        a = counts[..., masks[pair, False]].sum(axis=-1)
        total = a + b
        with np.errstate(invalid="ignore", divide="ignore"):
            out.append(np.where(total > 0, 2.0 * b / total - 1.0, np.nan))
    return np.stack(out, axis=-1)


def estimate_overlaps(
    counts: EventCounts,
    anrd_corrected: bool = True,
    bootstrap_m: int = 1000,
    seed: int = 0,
    survival: float = DEFAULT_ANRD_SURVIVAL,
) -> EstimatedTriple:
    """Overlaps from bunching frequencies with Poisson-bootstrap 1-sigma errors.

    With ``anrd_corrected`` the bunched counts are divided by the ANRD
    survival probability, undoing the attrition in expectation.
    """
    weight = 1.0 / survival if anrd_corrected else 1.0
    masks = {(pair, b): counts.mask(pair, bunched=b) for pair in PAIRS for b in (True, False)}
    raw = _raw_overlaps(counts.counts.astype(float), masks, weight)
    for pair, value in zip(PAIRS, raw):
        if np.isnan(value):
            raise UndefinedOverlapError(f"no two-photon events for pair {pair}")

    samples = None
    sigma = (0.0, 0.0, 0.0)
    if bootstrap_m > 0:
        resampled = np.stack(
            [substream(seed, BOOTSTRAP, i).poisson(counts.counts) for i in range(bootstrap_m)]
        )
        samples = _raw_overlaps(resampled.astype(float), masks, weight)
        sigma = tuple(float(s) for s in np.nanstd(samples, axis=0, ddof=1))

    clamped = tuple(bool(not 0.0 <= r <= 1.0) for r in raw)
    return EstimatedTriple(
        triple=OverlapTriple.from_array(np.clip(raw, 0.0, 1.0)),
        sigma=sigma,
        raw=tuple(float(r) for r in raw),
        clamped=clamped,
        bootstrap_m=bootstrap_m,
        seed=seed,
        anrd_corrected=anrd_corrected,
        samples=samples,
    )


def tvd(p, q) -> float:
    """Total variation distance between two distributions on the same patterns."""
    if isinstance(p, OutputDistribution) and isinstance(q, OutputDistribution):
        if list(p.patterns) != list(q.patterns):
            raise ValueError("distributions are defined on different patterns")
        p, q = p.probabilities, q.probabilities
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions have different supports")
    return float(0.5 * np.abs(p - q).sum())


# ---------------------------------------------------------------------------
# Dip fitting
# ---------------------------------------------------------------------------

class DipFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class DipFit:
    a: float
    v: float
    sigma: float
    a_err: float
    v_err: float
    sigma_err: float
    chi2: float

    def params(self) -> tuple[float, float, float]:
        return self.a, self.v, self.sigma


def _initial_guess(dx: np.ndarray, y: np.ndarray) -> np.ndarray:
    a0 = float(y.max())
    v0 = float(1.0 - y.min() / a0) if a0 > 0 else 0.0
    # half width at half depth: exp(-sigma w^2) = 1/2
    centre = dx[np.argmin(y)]
    half = a0 * (1.0 - v0 / 2.0)
    below = np.abs(dx[y <= half] - centre)
    span = np.ptp(dx) or 1.0
    w = below.max() if below.size and below.max() > 0 else span / 4.0
    return np.array([a0, v0, math.log(2.0) / w**2])


def fit_dip(samples) -> DipFit:
    """Weighted least-squares fit of the HOM dip to ``(dx, count)`` samples.

    Residuals are weighted by Poisson errors ``sqrt(max(count, 1))``.
    Parameter uncertainties come from the Gauss-Newton covariance.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or len(data) < 4:
        raise DipFitError("need at least four (dx, count) samples")
    dx, y = data[:, 0], data[:, 1]
    err = np.sqrt(np.maximum(y, 1.0))
    p0 = _initial_guess(dx, y)
    scale = np.abs(p0) + np.array([1.0, 1e-3, 1e-12])

    # Solve in units of the initial guess so all parameters are O(1).
    def residuals(q):
        a, v, s = q * scale
        return (dip_curve(dx, a, v, s) - y) / err

    res = least_squares(residuals, p0 / scale, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    if not res.success:
        raise DipFitError(f"dip fit did not converge: {res.message}")
    a, v, s = res.x * scale
    if not -1e-9 <= v <= 1.05 or a <= 0:
        raise DipFitError(f"fitted visibility {v:.4g} outside [0, 1.05]")

    dof = max(len(dx) - 3, 1)
    chi2 = float(np.sum(res.fun**2))
    jac = res.jac / scale
    try:
        cov = np.linalg.inv(jac.T @ jac)
        errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        errs = np.full(3, np.inf)
    return DipFit(float(a), float(max(v, 0.0)), float(s), *map(float, errs), chi2=chi2 / dof)


def synthetic_dip(dx, a: float, v: float, sigma: float, seed=None) -> np.ndarray:
    """Dip samples; Poisson-noised when ``seed`` is given."""
    mean = dip_curve(dx, a, v, sigma)
    if seed is None:
        return np.column_stack([dx, mean])
    return np.column_stack([dx, substream(seed, SAMPLING).poisson(mean)])

import numpy as np
import pytest

from overlap_witness.estimation import (
    DipFitError,
    EventCounts,
    anrd_survival,
    apply_anrd,
    apply_losses,
    estimate_overlaps,
    fit_dip,
    sample_events,
    synthetic_dip,
    tvd,
)
from overlap_witness.geometry import OverlapTriple, coherence_witness
from overlap_witness.interference import (
    UndefinedOverlapError,
    build_network,
    gram_from_triple,
    output_distribution,
    overlaps_from_distribution,
)
from overlap_witness.reference import measured_calibration
from overlap_witness.statemodel import ExperimentConfig, predict_triple, preparation_from_triple

NET = build_network()
CAL = measured_calibration()
S1 = predict_triple(ExperimentConfig(*preparation_from_triple(0.648, 0.63, CAL), CAL))
S1_DIST = output_distribution(NET, gram_from_triple(S1))


def _exact_counts(dist, n):
    return EventCounts.like(dist, np.rint(dist.probabilities * n).astype(np.int64))


def test_sample_single_event():
    counts = sample_events(S1_DIST, 1, seed=0)
    assert counts.n == 1 and counts.counts.max() == 1


def test_sample_rejects_zero():
    with pytest.raises(ValueError):
        sample_events(S1_DIST, 0, seed=0)


def test_sample_concentrated_distribution():
    probs = np.zeros(len(S1_DIST))
    probs[7] = 1.0
    dist = type(S1_DIST)(S1_DIST.patterns, probs, S1_DIST.tags, S1_DIST.bunched)
    counts = sample_events(dist, 500, seed=1)
    assert counts.counts[7] == 500 and counts.n == 500


def test_sample_within_multinomial_bands():
    n = 1_000_000
    counts = sample_events(S1_DIST, n, seed=2)
    p = S1_DIST.probabilities
    band = 5 * np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts.counts - n * p) <= band)


def test_sampling_reproducible():
    a = sample_events(S1_DIST, 10_000, seed=3)
    b = sample_events(S1_DIST, 10_000, seed=3)
    c = sample_events(S1_DIST, 10_000, seed=4)
    assert np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)
    ea = estimate_overlaps(a, seed=3)
    eb = estimate_overlaps(b, seed=3)
    assert ea.sigma == eb.sigma and ea.triple == eb.triple


def test_anrd_survival_law():
    assert anrd_survival((0, 2, 4)) == 1.0
    assert anrd_survival((0, 0, 4)) == 0.5
    assert anrd_survival((3, 3, 3)) == 0.0
    assert anrd_survival((0, 0, 4), survival=0.8) == 0.8


def test_anrd_leaves_antibunched_counts():
    counts = sample_events(S1_DIST, 10_000, seed=5)
    single = np.array([len(set(p)) == 3 for p in counts.patterns])
    after = apply_anrd(counts, seed=5)
    assert np.array_equal(after.counts[single], counts.counts[single])


def test_anrd_bunched_binomial():
    idx = S1_DIST.patterns.index((0, 0, 3))
    raw = np.zeros(len(S1_DIST), dtype=np.int64)
    raw[idx] = 1000
    after = apply_anrd(EventCounts.like(S1_DIST, raw), seed=6)
    assert abs(after.counts[idx] - 500) <= 5 * np.sqrt(250)


def test_anrd_per_pattern_survival():
    raw = np.full(len(S1_DIST), 20_000, dtype=np.int64)
    after = apply_anrd(EventCounts.like(S1_DIST, raw), seed=7)
    for pattern, kept in zip(S1_DIST.patterns, after.counts):
        k = sum(1 for m in set(pattern) if pattern.count(m) == 2)
        expected = 0.5**k if pattern.count(pattern[0]) < 3 else 0.0
        assert kept / 20_000 == pytest.approx(expected, abs=5 * np.sqrt(0.25 / 20_000) + 1e-12)


def test_losses():
    counts = sample_events(S1_DIST, 100_000, seed=8)
    assert np.array_equal(apply_losses(counts, 1.0, seed=8).counts, counts.counts)
    kept = apply_losses(counts, 0.5, seed=8)
    assert kept.n == pytest.approx(counts.n / 8, rel=0.05)
    with pytest.raises(ValueError):
        apply_losses(counts, 0.0, seed=8)


@pytest.mark.parametrize("gram, expected", [(np.ones((3, 3)), 1.0), (np.eye(3), 0.0)])
def test_estimate_exact_proportions(gram, expected):
    dist = output_distribution(NET, gram)
    est = estimate_overlaps(_exact_counts(dist, 80_000), anrd_corrected=False, bootstrap_m=200)
    assert est.triple.as_array() == pytest.approx([expected] * 3, abs=1e-9)
    assert all(s >= 0 for s in est.sigma)


def test_estimate_exact_proportions_with_anrd_weight():
    counts = _exact_counts(S1_DIST, 10**8)
    recorded = counts.replace(np.rint(counts.counts * [anrd_survival(p) for p in counts.patterns]))
    est = estimate_overlaps(recorded, anrd_corrected=True, bootstrap_m=0)
    assert est.triple.as_array() == pytest.approx(S1.as_array(), abs=1e-6)


def test_estimate_undefined_pair():
    raw = np.zeros(len(S1_DIST), dtype=np.int64)
    raw[S1_DIST.mask("AB")] = 10
    raw[S1_DIST.mask("AC")] = 10
    with pytest.raises(UndefinedOverlapError):
        estimate_overlaps(EventCounts.like(S1_DIST, raw))


def test_estimate_report():
    est = estimate_overlaps(sample_events(S1_DIST, 10_000, seed=9), anrd_corrected=False, bootstrap_m=1000)
    doc = est.to_dict()
    assert doc["bootstrap"] == {"m": 1000, "law": "poisson", "seed": 0}
    assert set(doc["overlaps"]) == {"AB", "BC", "AC"}
    assert est.covariance.shape == (3, 3)
    assert np.allclose(np.sqrt(np.diag(est.covariance)), est.sigma)


def test_pipeline_s1_within_table_errors():
    counts = apply_anrd(sample_events(S1_DIST, 10_000, seed=10), seed=10)
    est = estimate_overlaps(counts, anrd_corrected=True, seed=10)
    measured = np.array([0.648, 0.63, 0.14])
    table_sigma = np.array([0.014, 0.01, 0.02])
    combined = np.sqrt(np.square(est.sigma) + table_sigma**2)
    assert np.all(np.abs(est.triple.as_array() - measured) <= 3 * combined)
    assert coherence_witness(est.triple) > 0


def test_estimator_consistency_large_n():
    exact = overlaps_from_distribution(S1_DIST).triple.as_array()
    counts = apply_anrd(sample_events(S1_DIST, 10**7, seed=11), seed=11)
    est = estimate_overlaps(counts, anrd_corrected=True, bootstrap_m=1000, seed=11)
    assert np.all(np.abs(est.triple.as_array() - exact) <= 3 * np.array(est.sigma))


def test_anrd_neutral_in_expectation():
    with_anrd, without = [], []
    for seed in range(200):
        counts = sample_events(S1_DIST, 10_000, seed=seed)
        without.append(estimate_overlaps(counts, anrd_corrected=False, bootstrap_m=0).raw)
        with_anrd.append(estimate_overlaps(apply_anrd(counts, seed=seed), anrd_corrected=True, bootstrap_m=0).raw)
    with_anrd, without = np.array(with_anrd), np.array(without)
    sem = np.sqrt(with_anrd.var(axis=0, ddof=1) / 200 + without.var(axis=0, ddof=1) / 200)
    assert np.all(np.abs(with_anrd.mean(axis=0) - without.mean(axis=0)) <= 2 * sem)


def _mean_sigma(n, seeds=range(20)):
    out = []
    for seed in seeds:
        counts = apply_anrd(sample_events(S1_DIST, n, seed=seed), seed=seed)
        out.append(estimate_overlaps(counts, bootstrap_m=400, seed=seed).sigma)
    return np.mean(out, axis=0)


def test_sigma_shrinks_by_sqrt2_when_doubling_n():
    ratio = _mean_sigma(10_000) / _mean_sigma(20_000)
    assert ratio == pytest.approx([np.sqrt(2)] * 3, rel=0.06)


def test_sigma_scales_as_inverse_sqrt_n():
    sig = np.array([_mean_sigma(n) for n in (1_000, 10_000, 100_000)])
    slopes = np.polyfit(np.log10([1_000, 10_000, 100_000]), np.log10(sig), 1)[0]
    assert slopes == pytest.approx([-0.5] * 3, abs=0.03)


def test_tvd_basic():
    p = S1_DIST.probabilities
    assert tvd(S1_DIST, S1_DIST) == 0.0
    a, b = np.zeros(len(p)), np.zeros(len(p))
    a[0], b[1] = 1.0, 1.0
    assert tvd(a, b) == 1.0
    with pytest.raises(ValueError):
        tvd(p, p[:-1])


def test_tvd_is_metric():
    rng = np.random.default_rng(12)
    for _ in range(500):
        p, q, r = rng.dirichlet(np.ones(56), size=3)
        assert tvd(p, q) == pytest.approx(tvd(q, p), abs=1e-15)
        assert tvd(p, r) <= tvd(p, q) + tvd(q, r) + 1e-15
        assert 0.0 <= tvd(p, q) <= 1.0


def test_self_tvd_small():
    emp = sample_events(S1_DIST, 10_000, seed=13).empirical()
    assert 0.0 < tvd(emp, S1_DIST) < 0.04


DX = np.linspace(-400.0, 400.0, 41)


def test_fit_dip_noiseless():
    fit = fit_dip(synthetic_dip(DX, 1000.0, 0.944, 8.7e-5))
    assert fit.params() == pytest.approx((1000.0, 0.944, 8.7e-5), rel=1e-6)


def test_fit_dip_noisy():
    pulls = []
    for seed in range(30):
        fit = fit_dip(synthetic_dip(DX, 3000.0, 0.944, 8.7e-5, seed=seed))
        assert fit.v_err < 0.005
        pulls.append((fit.v - 0.944) / fit.v_err)
    assert abs(np.mean(pulls)) < 1.0
    assert 0.6 < np.std(pulls) < 1.5


def test_fit_dip_flat():
    flat = np.column_stack([DX, np.full(len(DX), 1000.0)])
    fit = fit_dip(flat)
    assert fit.v == pytest.approx(0.0, abs=1e-6)
    assert fit.a == pytest.approx(1000.0)


def test_fit_dip_rejects_short_input():
    with pytest.raises(DipFitError):
        fit_dip([(0, 1), (1, 2), (2, 3)])


def test_synthetic_dip_reproducible():
    assert np.array_equal(synthetic_dip(DX, 1000, 0.9, 1e-4, seed=1), synthetic_dip(DX, 1000, 0.9, 1e-4, seed=1))

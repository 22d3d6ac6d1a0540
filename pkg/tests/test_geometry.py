import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from overlap_witness.geometry import (
    CLASSICAL_VERTICES,
    Body,
    OverlapTriple,
    UnphysicalTripleWarning,
    coherence_witness,
    dimension_witness,
    face_slacks,
    in_body,
    in_classical_hull,
    in_classical_polytope,
    in_quantum_set,
    in_qubit_set,
    project_to_body,
    witness_report,
    witness_sigma,
)

from oracles import overlaps_of_states, qubit_sampling_distance, random_pure_states

unit = st.floats(0.0, 1.0, allow_nan=False)
triples = st.builds(OverlapTriple, unit, unit, unit)

S1 = OverlapTriple(0.648, 0.63, 0.14)
T2 = OverlapTriple(0.019, 0.041, 0.032)


def test_triple_rejects_out_of_range():
    with pytest.raises(ValueError):
        OverlapTriple(1.2, 0.0, 0.0)
    with pytest.raises(ValueError):
        OverlapTriple(0.5, -1e-3, 0.0)
    with pytest.raises(ValueError):
        OverlapTriple(np.nan, 0.5, 0.5)


@pytest.mark.parametrize(
    "t, expected",
    [((1, 1, 1), True), ((1, 1, 0), False), ((0.648, 0.63, 0.14), False), ((0.5, 0.5, 0.5), True)],
)
def test_classical_membership_examples(t, expected):
    assert in_classical_polytope(OverlapTriple(*t)) is expected
    assert in_classical_hull(OverlapTriple(*t)) is expected


@pytest.mark.parametrize("v", CLASSICAL_VERTICES)
def test_vertices_are_classical(v):
    assert in_classical_polytope(v)


@pytest.mark.parametrize("t", [(1, 1, 0), (1, 0, 1), (0, 1, 1)])
def test_logically_impossible_points(t):
    assert not in_classical_polytope(t)
    assert not in_quantum_set(t)


def test_halfspace_and_hull_agree():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 1, (3000, 3))
    halfspace = in_classical_polytope(pts)
    hull = np.array([in_classical_hull(p) for p in pts])
    assert np.array_equal(halfspace, hull)
    assert 0 < halfspace.sum() < len(pts)


def test_quantum_membership_examples():
    assert in_quantum_set(S1)
    assert not in_quantum_set(OverlapTriple(1, 1, 0))
    assert in_quantum_set(OverlapTriple(0, 0, 0))
    # the one active bound, evaluated by hand
    bound = (np.sqrt(0.648 * 0.63) - np.sqrt(0.352 * 0.37)) ** 2
    assert bound == pytest.approx(0.0773, abs=5e-4)


def test_qubit_membership_examples():
    assert not in_qubit_set(OverlapTriple(0, 0, 0))
    assert not in_qubit_set(T2)
    # trine states: Bloch vectors 120 degrees apart
    bloch = [np.array([np.cos(a), np.sin(a), 0.0]) for a in (0, 2 * np.pi / 3, 4 * np.pi / 3)]
    r = [(1 + bloch[i] @ bloch[j]) / 2 for i, j in ((0, 1), (1, 2), (0, 2))]
    assert r == pytest.approx([0.25, 0.25, 0.25])
    assert in_qubit_set(OverlapTriple(*r))


def test_nesting():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 1, (100_000, 3))
    c, q, qb = in_classical_polytope(pts), in_quantum_set(pts), in_qubit_set(pts)
    assert np.all(q[c])
    assert np.all(q[qb])
    assert c.sum() > 0 and qb.sum() > 0 and (q & ~qb).sum() > 0


def test_random_states_are_achievable():
    rng = np.random.default_rng(3)
    qubits = overlaps_of_states(*(random_pure_states(20_000, 2, rng) for _ in range(3)))
    qutrits = overlaps_of_states(*(random_pure_states(20_000, 3, rng) for _ in range(3)))
    assert np.all(in_qubit_set(qubits, tol=1e-9))
    assert np.all(in_quantum_set(qutrits, tol=1e-9))
    # qutrits do leave Qb
    assert not np.all(in_qubit_set(qutrits, tol=1e-9))


def test_coherence_witness_values():
    assert coherence_witness(S1) == pytest.approx(0.080, abs=0.002)
    assert coherence_witness(OverlapTriple(0.830, 0.624, 0.381)) == pytest.approx(0.042, abs=0.002)
    assert coherence_witness(OverlapTriple(0, 0, 0)) == pytest.approx(-1 / np.sqrt(3))
    assert face_slacks(S1)[0] == coherence_witness(S1)


@given(triples)
def test_coherence_witness_symmetric_in_ab_bc(t):
    swapped = OverlapTriple(t.r_bc, t.r_ab, t.r_ac)
    assert coherence_witness(t) == pytest.approx(coherence_witness(swapped), abs=1e-15)


@given(triples)
def test_classical_membership_matches_face_slacks(t):
    assert in_classical_polytope(t) == bool(np.all(face_slacks(t) <= 1e-12))


def test_project_classical_interior_and_exterior():
    p = project_to_body(OverlapTriple(0.5, 0.5, 0.5), Body.CLASSICAL)
    assert p.distance == 0.0
    p = project_to_body(OverlapTriple(1, 1, 0), Body.CLASSICAL)
    assert p.distance == pytest.approx(1 / np.sqrt(3))
    assert in_classical_polytope(p.nearest_point)
    # for S1 the nearest point lies on the violated face itself
    p = project_to_body(S1, Body.CLASSICAL)
    assert p.distance == pytest.approx(coherence_witness(S1), abs=1e-12)


def test_project_qubit_table_value_and_oracle():
    p = project_to_body(T2, Body.QUBIT)
    assert p.distance == pytest.approx(0.380, abs=0.02)
    assert in_qubit_set(p.nearest_point)
    assert p.distance == pytest.approx(qubit_sampling_distance(T2.as_array()), abs=5e-4)


def test_project_origin_onto_qubit_body():
    p = project_to_body(OverlapTriple(0, 0, 0), Body.QUBIT)
    assert p.distance == pytest.approx(qubit_sampling_distance([0, 0, 0]), abs=5e-4)
    assert p.distance == pytest.approx(np.sqrt(3) / 4, abs=1e-6)


@pytest.mark.parametrize("body", list(Body))
def test_projection_soundness(body):
    rng = np.random.default_rng(4)
    members = rng.uniform(0, 1, (200_000, 3))
    members = members[in_body(members, body)][:10_000]
    assert len(members) == 10_000
    for t in (OverlapTriple(0, 0, 0), OverlapTriple(1, 1, 0), T2, OverlapTriple(0.9, 0.95, 0.1)):
        p = project_to_body(t, body)
        assert in_body(p.nearest_point, body)
        brute = np.linalg.norm(members - t.as_array(), axis=1).min()
        assert p.distance <= brute + 1e-9
        assert (p.distance == 0) == in_body(t, body)


@pytest.mark.parametrize("body", [Body.QUANTUM, Body.QUBIT])
def test_projection_matches_random_members_locally(body):
    # Q and Qb projections agree with a dense local search on the boundary.
    rng = np.random.default_rng(5)
    t = OverlapTriple(0.95, 0.9, 0.05)
    p = project_to_body(t, body)
    cloud = p.nearest_point.as_array() + rng.normal(scale=0.02, size=(200_000, 3))
    cloud = cloud[in_body(cloud, body)]
    assert p.distance <= np.linalg.norm(cloud - t.as_array(), axis=1).min() + 1e-9


def test_dimension_witness_examples():
    assert dimension_witness(T2) == pytest.approx(0.380, abs=0.02)
    assert dimension_witness(OverlapTriple(0.25, 0.25, 0.25)) == 0.0
    assert dimension_witness(OverlapTriple(1, 1, 1)) == 0.0


def test_dimension_witness_warns_when_unphysical():
    with pytest.warns(UnphysicalTripleWarning):
        dimension_witness(OverlapTriple(1, 1, 0))


@settings(max_examples=30, deadline=None)
@given(triples)
def test_dimension_witness_zero_iff_in_qubit_body(t):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnphysicalTripleWarning)
        wd = dimension_witness(t, n_starts=4)
    assert (wd == 0.0) == in_qubit_set(t)


def test_witness_report():
    rep = witness_report(T2)
    assert rep.in_q and not rep.in_qb and rep.in_c
    assert rep.w_d == pytest.approx(0.380, abs=0.02)
    assert in_qubit_set(rep.nearest_point)
    assert witness_report(OverlapTriple(0.25, 0.25, 0.25)).w_d == 0.0
    assert not witness_report(OverlapTriple(1, 1, 0)).physical


def test_witness_sigma_zero_covariance():
    assert witness_sigma(S1, np.zeros((3, 3))) == np.inf


def test_witness_sigma_rejects_bad_covariance():
    with pytest.raises(ValueError):
        witness_sigma(S1, -np.eye(3))
    with pytest.raises(ValueError):
        witness_sigma(S1, np.ones((2, 2)))


def test_witness_sigma_matches_linear_propagation():
    sig = np.array([0.014, 0.01, 0.02])
    linear = coherence_witness(S1) / (np.linalg.norm(sig) / np.sqrt(3))
    assert witness_sigma(S1, np.diag(sig**2), n_samples=20_000) == pytest.approx(linear, rel=0.02)


def test_witness_sigma_reproducible():
    cov = np.diag([0.014, 0.01, 0.02]) ** 2
    assert witness_sigma(S1, cov, seed=3) == witness_sigma(S1, cov, seed=3)


def test_quantum_bounds_are_continuous_at_guard():
    # On r1 + r2 = 1 the guarded bound vanishes, so Q has no jump there.
    for r1 in np.linspace(0, 1, 11):
        r2 = 1 - r1
        bound = (np.sqrt(r1 * r2) - np.sqrt((1 - r1) * (1 - r2))) ** 2
        assert bound == pytest.approx(0.0, abs=1e-15)


def test_permutation_symmetry_of_quantum_bodies():
    rng = np.random.default_rng(6)
    pts = rng.uniform(0, 1, (20_000, 3))
    for perm in itertools.permutations(range(3)):
        assert np.array_equal(in_quantum_set(pts), in_quantum_set(pts[:, perm]))
        assert np.array_equal(in_qubit_set(pts), in_qubit_set(pts[:, perm]))

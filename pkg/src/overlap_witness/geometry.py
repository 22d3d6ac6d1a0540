"""Convex bodies of pairwise-overlap triples and the witnesses built on them.

Three nested sets live in the cube ``[0, 1]^3`` of triples
``(r_ab, r_bc, r_ac)``:

* ``C``  -- the polytope of triples reachable by states that are all diagonal
  in one common basis (convex hull of five deterministic vertices);
* ``Q``  -- triples reachable by arbitrary quantum states;
* ``Qb`` -- triples reachable by states spanning at most two dimensions.

A triple outside ``C`` witnesses basis-independent coherence; a triple
outside ``Qb`` (but inside ``Q``) witnesses Hilbert-space dimension >= 3.
"""

from __future__ import annotations

import enum
import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import minimize, nnls

SQRT3 = np.sqrt(3.0)

#: Membership slack below which a boundary point still counts as a member.
BOUNDARY_TOL = 1e-12
#: Distance below which a projection is reported as zero.
PROJECTION_TOL = {"C": 1e-9, "Q": 1e-6, "Qb": 1e-6}

CLASSICAL_VERTICES = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 1.0],
    ]
)

# Point strictly inside C, Q and Qb; used to pull optimizer output onto the body.
_ANCHOR = np.array([0.5, 0.5, 0.5])


class ProjectionError(RuntimeError):
    """Raised when no multistart run of a projection converges."""


class UnphysicalTripleWarning(UserWarning):
    """A triple lies outside the quantum body Q."""


class Body(enum.Enum):
    CLASSICAL = "C"
    QUANTUM = "Q"
    QUBIT = "Qb"


@dataclass(frozen=True)
class OverlapTriple:
    """Pairwise overlaps ``(r_ab, r_bc, r_ac)``, each a probability."""

    r_ab: float
    r_bc: float
    r_ac: float

    def __post_init__(self):
        for name in ("r_ab", "r_bc", "r_ac"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0.0 or value > 1.0:
                raise ValueError(f"{name}={value!r} is outside [0, 1]")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "OverlapTriple":
        r_ab, r_bc, r_ac = (float(v) for v in values)
        return cls(r_ab, r_bc, r_ac)

    def as_array(self) -> np.ndarray:
        return np.array([self.r_ab, self.r_bc, self.r_ac])

    def __iter__(self):
        return iter((self.r_ab, self.r_bc, self.r_ac))


def _as_points(t) -> np.ndarray:
    if isinstance(t, OverlapTriple):
        return t.as_array()
    return np.asarray(t, dtype=float)


# ---------------------------------------------------------------------------
# Classical polytope C
# ---------------------------------------------------------------------------

def face_slacks(t) -> np.ndarray:
    """Signed distances to the three non-trivial faces of C, positive outside.

    Column order: the ``r_ac >= r_ab + r_bc - 1`` face first, then the two
    upper faces ``r_ac <= r_ab - r_bc + 1`` and ``r_ac <= r_bc - r_ab + 1``.
    Accepts a single triple or an ``(n, 3)`` array.
    """
    p = _as_points(t)
    r_ab, r_bc, r_ac = p[..., 0], p[..., 1], p[..., 2]
    return np.stack(
        [
            r_ab + r_bc - 1.0 - r_ac,
            r_ac - r_ab + r_bc - 1.0,
            r_ac - r_bc + r_ab - 1.0,
        ],
        axis=-1,
    ) / SQRT3


def in_classical_polytope(t, tol: float = BOUNDARY_TOL):
    """Halfspace test for membership in C (vectorized over leading axes)."""
    p = _as_points(t)
    inside = np.all(face_slacks(p) <= tol, axis=-1)
    inside &= np.all((p >= -tol) & (p <= 1.0 + tol), axis=-1)
    return bool(inside) if inside.ndim == 0 else inside


def in_classical_hull(t, tol: float = 1e-9) -> bool:
    """Vertex test for membership in C: is ``t`` a convex combination of the
    five deterministic vertices?  Independent of the halfspace form."""
    x = _as_points(t)
    a = np.vstack([CLASSICAL_VERTICES.T, np.ones(len(CLASSICAL_VERTICES))])
    _, residual = nnls(a, np.append(x, 1.0))
    return bool(residual <= tol)


def coherence_witness(t) -> float:
    """Signed distance past the ``r_ac = r_ab + r_bc - 1`` face of C.

    Positive values certify that the three states cannot be simultaneously
    diagonal in any basis.
    """
    r_ab, r_bc, r_ac = _as_points(t)
    return (r_ab + r_bc - 1.0 - r_ac) / SQRT3


def _project_classical(x: np.ndarray) -> np.ndarray:
    # Exact Euclidean projection onto conv(vertices): best affine projection
    # over every vertex subset whose barycentric weights stay non-negative.
    best, best_d = None, np.inf
    n = len(CLASSICAL_VERTICES)
    for k in range(1, 5):
        for subset in itertools.combinations(range(n), k):
            v = CLASSICAL_VERTICES[list(subset)]
            if k == 1:
                cand, ok = v[0], True
            else:
                basis = (v[1:] - v[0]).T
                lam, *_ = np.linalg.lstsq(basis, x - v[0], rcond=None)
                ok = np.all(lam >= -1e-12) and lam.sum() <= 1.0 + 1e-12
                cand = v[0] + basis @ lam
            if ok:
                d = np.linalg.norm(cand - x)
                if d < best_d:
                    best, best_d = cand, d
    return np.clip(best, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Quantum bodies Q and Qb
# ---------------------------------------------------------------------------

def _pair_bound(r1, r2):
    """Lower bound on the third overlap given the two adjacent ones."""
    a = np.sqrt(np.clip(r1 * r2, 0.0, None))
    b = np.sqrt(np.clip((1.0 - r1) * (1.0 - r2), 0.0, None))
    return (a - b) ** 2


def quantum_slacks(t, qubit: bool = False) -> np.ndarray:
    """Constraint values ``g_k >= 0`` defining Q (or Qb when ``qubit``).

    Column k bounds overlap k by the other two.  For Q a bound is only active
    when its two adjacent overlaps sum to more than 1; the guarded form is
    continuous because the bound vanishes on ``r1 + r2 = 1``.
    """
    p = _as_points(t)
    r_ab, r_bc, r_ac = p[..., 0], p[..., 1], p[..., 2]
    pairs = ((r_bc, r_ac, r_ab), (r_ab, r_ac, r_bc), (r_ab, r_bc, r_ac))
    cols = []
    for r1, r2, r3 in pairs:
        bound = _pair_bound(r1, r2)
        if not qubit:
            bound = np.where(r1 + r2 > 1.0, bound, 0.0)
        cols.append(r3 - bound)
    return np.stack(cols, axis=-1)


def _in_cube(p, tol):
    return np.all((p >= -tol) & (p <= 1.0 + tol), axis=-1)


def in_quantum_set(t, tol: float = BOUNDARY_TOL):
    p = _as_points(t)
    inside = np.all(quantum_slacks(p) >= -tol, axis=-1) & _in_cube(p, tol)
    return bool(inside) if inside.ndim == 0 else inside


def in_qubit_set(t, tol: float = BOUNDARY_TOL):
    p = _as_points(t)
    inside = np.all(quantum_slacks(p, qubit=True) >= -tol, axis=-1) & _in_cube(p, tol)
    return bool(inside) if inside.ndim == 0 else inside


def in_body(t, body: Body, tol: float = BOUNDARY_TOL):
    body = Body(body)
    if body is Body.CLASSICAL:
        return in_classical_polytope(t, tol)
    if body is Body.QUANTUM:
        return in_quantum_set(t, tol)
    return in_qubit_set(t, tol)


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Projection:
    nearest_point: OverlapTriple
    distance: float
    body: Body
    n_converged: int = 0


def _pull_inside(x: np.ndarray, body: Body) -> np.ndarray:
    """Bisect along the segment to the anchor until ``x`` is a strict member."""
    x = np.clip(x, 0.0, 1.0)
    if in_body(x, body):
        return x
    lo, hi = 0.0, 1.0  # fraction of the way towards the anchor
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if in_body(x + mid * (_ANCHOR - x), body):
            hi = mid
        else:
            lo = mid
    return x + hi * (_ANCHOR - x)


def _boundary_seeds(x: np.ndarray, body: Body, n: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    seeds = [_pull_inside(x, body)]
    while len(seeds) < n:
        seeds.append(_pull_inside(rng.uniform(0.0, 1.0, 3), body))
    return seeds


def project_to_body(
    t,
    body: Body,
    n_starts: int = 16,
    seed: int = 0,
    x0: Iterable[np.ndarray] | None = None,
    ftol: float = 1e-8,
) -> Projection:
    """Nearest point of ``body`` to ``t`` and its Euclidean distance.

    C is projected exactly.  Q and Qb are projected by SLSQP on the squared
    distance under their defining inequalities, restarted from ``n_starts``
    boundary seeds (or from the explicit ``x0`` list); the best converged run
    wins, ties going to the earliest start.
    """
    body = Body(body)
    x = _as_points(t).astype(float)
    if body is Body.CLASSICAL:
        if in_classical_polytope(x):
            return Projection(OverlapTriple.from_array(x), 0.0, body, 1)
        p = _project_classical(x)
        return Projection(OverlapTriple.from_array(p), float(np.linalg.norm(p - x)), body, 1)

    if in_body(x, body):
        return Projection(OverlapTriple.from_array(x), 0.0, body, 1)

    qubit = body is Body.QUBIT
    constraints = [{"type": "ineq", "fun": lambda p: quantum_slacks(p, qubit=qubit)}]
    starts = list(x0) if x0 is not None else _boundary_seeds(x, body, n_starts, seed)

    # The objective is scaled so the ftol criterion acts on a relative change.
    scale = max(float(np.dot(x - _ANCHOR, x - _ANCHOR)), 1e-6)
    results = []
    for start in starts:
        res = minimize(
            lambda p: np.dot(p - x, p - x) / scale,
            np.asarray(start, dtype=float),
            jac=lambda p: 2.0 * (p - x) / scale,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * 3,
            constraints=constraints,
            options={"ftol": ftol * 1e-4, "maxiter": 500},
        )
        if res.success and np.all(quantum_slacks(res.x, qubit=qubit) >= -1e-7):
            p = _pull_inside(res.x, body)
            results.append((float(np.linalg.norm(p - x)), p))
    if not results:
        raise ProjectionError(f"no projection onto {body.value} converged from {len(starts)} starts")
    d, p = min(results, key=lambda r: r[0])
    return Projection(OverlapTriple.from_array(p), d, body, len(results))


def dimension_witness(t, n_starts: int = 16, seed: int = 0) -> float:
    """Distance from ``t`` to Qb; positive values certify dimension >= 3."""
    if not in_quantum_set(t):
        warnings.warn(f"{t} lies outside the quantum body Q", UnphysicalTripleWarning, stacklevel=2)
    return project_to_body(t, Body.QUBIT, n_starts=n_starts, seed=seed).distance


@dataclass(frozen=True)
class WitnessReport:
    triple: OverlapTriple
    face_slacks: tuple[float, float, float]
    w_c: float
    w_d: float
    nearest_point: OverlapTriple
    in_c: bool
    in_q: bool
    in_qb: bool
    significance: dict = field(default_factory=dict)

    @property
    def physical(self) -> bool:
        return self.in_q

    def to_dict(self) -> dict:
        return {
            "triple": list(self.triple),
            "in_C": self.in_c,
            "in_Q": self.in_q,
            "in_Qb": self.in_qb,
            "physical": self.physical,
            "face_slacks": list(self.face_slacks),
            "w_c": self.w_c,
            "w_d": self.w_d,
            "nearest_point_Qb": list(self.nearest_point),
            "significance": dict(self.significance),
        }


def witness_report(t: OverlapTriple, n_starts: int = 16, seed: int = 0) -> WitnessReport:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnphysicalTripleWarning)
        proj = project_to_body(t, Body.QUBIT, n_starts=n_starts, seed=seed)
    return WitnessReport(
        triple=t,
        face_slacks=tuple(float(s) for s in face_slacks(t)),
        w_c=float(coherence_witness(t)),
        w_d=proj.distance,
        nearest_point=proj.nearest_point,
        in_c=in_classical_polytope(t),
        in_q=in_quantum_set(t),
        in_qb=in_qubit_set(t),
    )


# ---------------------------------------------------------------------------
# Significance
# ---------------------------------------------------------------------------

def _dimension_witness_fast(x0: np.ndarray) -> Callable[[np.ndarray], float]:
    # Warm-started single run; falls back to a full multistart on failure.
    def fn(p):
        try:
            return project_to_body(p, Body.QUBIT, x0=[x0]).distance
        except ProjectionError:
            return project_to_body(p, Body.QUBIT).distance

    return fn


def witness_sigma(
    t,
    covariance,
    witness: str = "coherence",
    n_samples: int = 10_000,
    seed: int = 0,
) -> float:
    """Witness value over its Monte Carlo standard deviation.

    The triple is resampled from a normal law with the given 3x3 covariance,
    clipped to the cube, and the witness is re-evaluated on every sample.
    Returns ``inf`` for a zero covariance.
    """
    x = _as_points(t)
    cov = np.asarray(covariance, dtype=float)
    if cov.shape != (3, 3) or not np.allclose(cov, cov.T, atol=1e-15):
        raise ValueError("covariance must be a symmetric 3x3 matrix")
    eig = np.linalg.eigvalsh(cov)
    if eig.min() < -1e-12 * max(1.0, eig.max()):
        raise ValueError("covariance is not positive semidefinite")
    if witness == "coherence":
        value = coherence_witness(x)
        fn = coherence_witness
    elif witness == "dimension":
        proj = project_to_body(x, Body.QUBIT)
        value = proj.distance
        fn = _dimension_witness_fast(proj.nearest_point.as_array())
    else:
        raise ValueError(f"unknown witness {witness!r}")
    if np.allclose(cov, 0.0):
        return np.inf if value > 0 else (-np.inf if value < 0 else 0.0)

    rng = np.random.default_rng(seed)
    samples = np.clip(rng.multivariate_normal(x, cov, size=n_samples, method="eigh"), 0.0, 1.0)
    values = np.array([fn(s) for s in samples])
    return float(value / values.std(ddof=1))

"""Three-photon interference in the six-mode pairwise-HOM network.

Photons A, B, C enter modes 0, 2, 4.  A first layer of balanced splitters
puts each photon in superposition over two arms; the arms are routed so that
every pair meets at one final splitter:

    A arms (0, 1) -> AB, AC      B arms (2, 3) -> AB, BC      C arms (4, 5) -> BC, AC

and the final splitters for AB, BC, AC exit on modes (0, 1), (2, 3), (4, 5).
Two photons at the outputs of one final splitter carry that pair's HOM
statistics; patterns with one photon per splitter are insensitive to
two-photon interference.

Internal states enter through the Gram matrix ``S[i, j] = <phi_i|phi_j>``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import OverlapTriple

PAIRS = ("AB", "BC", "AC")
PAIR_INDEX = {"AB": (0, 1), "BC": (1, 2), "AC": (0, 2)}
INSENSITIVE = "insensitive"
N_MODES = 6
N_PHOTONS = 3

BALANCED_SPLITTER = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)


class UnphysicalGramError(ValueError):
    """Gram matrix is not a valid matrix of state overlaps."""


class UndefinedOverlapError(ValueError):
    """No two-photon events were recorded for a pair."""


@dataclass(frozen=True)
class Interferometer:
    """``unitary[i, o]`` is the amplitude for input mode ``i`` to reach output ``o``."""

    unitary: np.ndarray
    input_modes: tuple[int, int, int]
    pair_output_map: dict

    def __post_init__(self):
        u = self.unitary
        if u.shape != (N_MODES, N_MODES):
            raise ValueError("unitary must be 6x6")
        if np.abs(u.conj().T @ u - np.eye(N_MODES)).max() > 1e-12:
            raise ValueError("matrix is not unitary")
        if len(set(self.input_modes)) != N_PHOTONS:
            raise ValueError("input modes must be distinct")
        outs = [m for pair in PAIRS for m in self.pair_output_map[pair]]
        if len(set(outs)) != len(outs):
            raise ValueError("pair output sets must be disjoint")


def hom_bunching_probability(r: float) -> float:
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"overlap {r} outside [0, 1]")
    return (1.0 + r) / 2.0


def _splitter_layer() -> np.ndarray:
    return np.kron(np.eye(3), BALANCED_SPLITTER)


def build_network() -> Interferometer:
    # Intermediate mode -> final-splitter port: AB gets (0 from A, 2 from B),
    # BC gets (3 from B, 4 from C), AC gets (1 from A, 5 from C).
    routing = [0, 4, 1, 2, 3, 5]
    perm = np.zeros((N_MODES, N_MODES))
    for src, dst in enumerate(routing):
        perm[dst, src] = 1.0
    column_form = _splitter_layer() @ perm @ _splitter_layer()  # out = T @ in
    return Interferometer(
        unitary=column_form.T.astype(complex),
        input_modes=(0, 2, 4),
        pair_output_map={"AB": (0, 1), "BC": (2, 3), "AC": (4, 5)},
    )


# ---------------------------------------------------------------------------
# Gram matrices
# ---------------------------------------------------------------------------

def validate_gram(gram, tol: float = 1e-10) -> np.ndarray:
    s = np.asarray(gram, dtype=complex)
    if s.shape != (3, 3):
        raise UnphysicalGramError("Gram matrix must be 3x3")
    if np.abs(s - s.conj().T).max() > tol:
        raise UnphysicalGramError("Gram matrix is not Hermitian")
    if np.abs(np.diag(s) - 1.0).max() > tol:
        raise UnphysicalGramError("Gram matrix must have unit diagonal")
    if np.linalg.eigvalsh(s).min() < -tol:
        raise UnphysicalGramError("Gram matrix is not positive semidefinite")
    return s


def gram_from_triple(t: OverlapTriple, repair_tol: float = 1e-9) -> np.ndarray:
    """Real non-negative amplitudes ``S_ij = sqrt(r_ij)``.

    Eigenvalues down to ``-repair_tol`` are clipped and the diagonal
    renormalized; anything more negative is unphysical.
    """
    r_ab, r_bc, r_ac = t
    s = np.eye(3)
    for (i, j), r in zip((PAIR_INDEX[p] for p in PAIRS), (r_ab, r_bc, r_ac)):
        s[i, j] = s[j, i] = np.sqrt(r)
    w, v = np.linalg.eigh(s)
    if w.min() < -repair_tol:
        raise UnphysicalGramError(f"overlaps {tuple(t)} admit no real non-negative Gram matrix")
    if w.min() < 0.0:
        s = (v * np.clip(w, 0.0, None)) @ v.T
        d = 1.0 / np.sqrt(np.diag(s))
        s = s * np.outer(d, d)
    return s.astype(complex)


# ---------------------------------------------------------------------------
# Output distribution
# ---------------------------------------------------------------------------

def all_patterns(n_modes: int = N_MODES, n_photons: int = N_PHOTONS) -> list[tuple[int, ...]]:
    """Sorted mode multisets, in lexicographic order."""
    return list(itertools.combinations_with_replacement(range(n_modes), n_photons))


def classify_pattern(pattern, pair_output_map) -> tuple[str, bool]:
    """Pair tag and bunched flag of an output pattern."""
    for pair in PAIRS:
        outs = pair_output_map[pair]
        hits = [m for m in pattern if m in outs]
        if len(hits) == 2:
            return pair, hits[0] == hits[1]
    return INSENSITIVE, False


@dataclass
class OutputDistribution:
    patterns: list
    probabilities: np.ndarray
    tags: list
    bunched: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        self.bunched = np.asarray(self.bunched, dtype=bool)

    def __len__(self):
        return len(self.patterns)

    def as_dict(self) -> dict:
        return dict(zip(self.patterns, self.probabilities))

    def mask(self, pair: str, bunched: bool | None = None) -> np.ndarray:
        m = np.array([tag == pair for tag in self.tags])
        if bunched is not None:
            m &= self.bunched == bunched
        return m

    def rows(self):
        for pattern, p, tag, b in zip(self.patterns, self.probabilities, self.tags, self.bunched):
            yield "-".join(map(str, pattern)), float(p), tag, bool(b)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pattern", "probability", "pair_tag", "bunched_flag"])
            for pattern, p, tag, b in self.rows():
                w.writerow([pattern, repr(p), tag, int(b)])

    def write_json(self, path: str | Path) -> None:
        doc = {
            "metadata": self.metadata,
            "patterns": [
                {"pattern": pattern, "probability": p, "pair_tag": tag, "bunched": b}
                for pattern, p, tag, b in self.rows()
            ],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


_PERMS = list(itertools.permutations(range(N_PHOTONS)))


def pattern_probability(m: np.ndarray, gram: np.ndarray, pattern) -> float:
    """Probability of one output pattern.

    ``m[j, k]`` is the amplitude for photon ``j`` to reach the k-th slot of
    ``pattern``.  Sums over pairs of photon-to-slot assignments, weighted by
    the internal-state overlaps, and divides by the occupation factorials.
    """
    total = 0.0 + 0.0j
    k = np.arange(N_PHOTONS)
    for sigma in _PERMS:
        amp = m[sigma, k]
        for rho in _PERMS:
            total += np.prod(gram[rho, sigma] * amp * np.conj(m[rho, k]))
    norm = math.prod(math.factorial(pattern.count(x)) for x in set(pattern))
    return total.real / norm


def output_distribution(net: Interferometer, gram) -> OutputDistribution:
    s = validate_gram(gram)
    u_in = net.unitary[list(net.input_modes), :]
    patterns = all_patterns()
    probs = np.array([pattern_probability(u_in[:, list(d)], s, d) for d in patterns])
    probs = np.where(np.abs(probs) < 1e-15, 0.0, probs)
    classified = [classify_pattern(d, net.pair_output_map) for d in patterns]
    return OutputDistribution(
        patterns=patterns,
        probabilities=probs,
        tags=[c[0] for c in classified],
        bunched=[c[1] for c in classified],
    )


@dataclass(frozen=True)
class OverlapEstimate:
    triple: OverlapTriple
    raw: tuple[float, float, float]
    clamped: tuple[bool, bool, bool]


def _overlap_from_weights(bunched: float, total: float, pair: str) -> float:
    if total <= 0.0:
        raise UndefinedOverlapError(f"no two-photon events for pair {pair}")
    return 2.0 * bunched / total - 1.0


def overlaps_from_distribution(dist: OutputDistribution) -> OverlapEstimate:
    """Overlaps from each pair's bunching probability, ``r = 2 p_b - 1``."""
    raw = []
    for pair in PAIRS:
        total = dist.probabilities[dist.mask(pair)].sum()
        bunched = dist.probabilities[dist.mask(pair, bunched=True)].sum()
        raw.append(_overlap_from_weights(bunched, total, pair))
    clamped = tuple(not 0.0 <= r <= 1.0 for r in raw)
    triple = OverlapTriple.from_array(np.clip(raw, 0.0, 1.0))
    return OverlapEstimate(triple, tuple(raw), clamped)


def dip_curve(dx, a: float, v: float, sigma: float):
    """Coincidence rate versus delay-line displacement ``dx``."""
    return a * (1.0 - v * np.exp(-sigma * np.asarray(dx, dtype=float) ** 2))

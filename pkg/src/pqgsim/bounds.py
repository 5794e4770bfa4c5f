"""Overlap geometry of stored-program states and register-size bounds.

How distinguishable are the program states of two different stored
rotations, and how small can a program register be for a given failure
rate?  This module computes program-state overlaps in closed form and by
direct inner product, checks the linear-independence criterion for sets
of nearly orthogonal vectors through their Gram matrix, estimates the
random-overlap eigenvalue heuristic, and evaluates the register-size
lower bound ``(tau/2) * log2(1/epsilon)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .gates import z_rotation, hs_distance
from .qstate import StateVector, haar_random_unitary
from .proggate import ProgramSpec, program_state

HERMITIAN_ATOL = 1e-12
PSD_ATOL = 1e-10

# The register bound's exponent: 1 for probabilistic gates (failure is
# heralded), 1/2 for approximate ones.
TAU_PROBABILISTIC = 1.0
TAU_APPROXIMATE = 0.5
_ALLOWED_TAU = (TAU_PROBABILISTIC, TAU_APPROXIMATE)


@dataclass(frozen=True)
class OverlapReport:
    """One scan row: a pair of stored rotations and their overlap geometry.

    ``bound_ratio`` is |overlap| * distance / (epsilon^tau * dim), the
    empirical constant of the overlap bound; it is None on rows with
    coincident gates (distance 0), which are excluded from ratio
    statistics.
    """

    alpha: float
    beta: float
    n_qubits: int
    overlap: float
    distance: float
    epsilon: float
    bound_ratio: float | None


def program_overlap(alpha: float, beta: float, n: int) -> float:
    """Closed-form overlap of two stored-program states.

    <P_alpha|P_beta> = prod_{l=1..n} cos(2^l (alpha - beta)); equatorial
    overlaps are real, so this is a plain float.  Always agrees with the
    direct inner product of ``program_state`` outputs.
    """
    if n < 1:
        raise ValueError(f"need at least one program qubit, got {n}")
    delta = alpha - beta
    return float(np.prod([math.cos((2 ** l) * delta) for l in range(1, n + 1)]))


def direct_overlap(a: StateVector, b: StateVector) -> complex:
    """Plain inner product <a|b>, the oracle for the closed form."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def discrete_family(m: int, n: int) -> list[StateVector]:
    """Stored-program states for the m discretized angles pi*s/m, s = 0..m-1.

    Note the aliasing at n = 1: because the stored ladder starts at the
    doubled angle, angles pi/2 apart give program states equal up to a
    global sign there.
    """
    if m < 2:
        raise ValueError(f"need at least two family members, got {m}")
    return [program_state(ProgramSpec(np.pi * s / m, n)) for s in range(m)]


@dataclass(frozen=True)
class GramMatrix:
    """Matrix of pairwise inner products of normalized vectors.

    Hermitian with unit diagonal within 1e-12 and PSD down to -1e-10.
    """

    entries: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.entries, dtype=complex)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
            raise ValueError(f"Gram matrix must be square, got shape {g.shape}")
        if not np.allclose(g, g.conj().T, atol=HERMITIAN_ATOL):
            raise ValueError("Gram matrix is not Hermitian within 1e-12")
        if not np.allclose(np.diag(g).real, 1.0, atol=HERMITIAN_ATOL):
            raise ValueError("Gram matrix diagonal must be all ones")
        if float(np.linalg.eigvalsh(g)[0]) < -PSD_ATOL:
            raise ValueError("Gram matrix is not positive semidefinite within -1e-10")
        g = g.copy()
        g.setflags(write=False)
        object.__setattr__(self, "entries", g)

    @property
    def q(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_vectors(cls, vectors) -> "GramMatrix":
        vecs = [np.asarray(v.amplitudes if isinstance(v, StateVector) else v, dtype=complex)
                for v in vectors]
        if len(vecs) < 1:
            raise ValueError("need at least one vector")
        dims = {v.size for v in vecs}
        if len(dims) != 1:
            raise ValueError(f"vectors must share one dimension, got {sorted(dims)}")
        stack = np.array(vecs)
        return cls(stack.conj() @ stack.T)

    def max_offdiagonal(self) -> float:
        if self.q == 1:
            return 0.0
        off = self.entries - np.diag(np.diag(self.entries))
        return float(np.max(np.abs(off)))


class RankResult(NamedTuple):
    """Numerical rank plus the tolerance it was judged at."""

    rank: int
    tol: float
    eigenvalues: np.ndarray


def gram_rank(gram: GramMatrix, tol: float | None = None) -> RankResult:
    """Number of Gram eigenvalues above ``tol``.

    The default threshold is q * machine-epsilon * largest-eigenvalue,
    the usual relative criterion; the tolerance actually used is part of
    the result because numerical rank is meaningless without it.
    """
    eigs = np.linalg.eigvalsh(gram.entries)
    if tol is None:
        tol = gram.q * np.finfo(float).eps * float(eigs[-1])
    rank = int(np.sum(eigs > tol))
    return RankResult(rank, float(tol), eigs)


class LemmaVerdict(NamedTuple):
    applicable: bool
    full_rank: bool
    max_overlap: float
    rank: int


def lemma_check(vectors) -> LemmaVerdict:
    """Linear-independence criterion for a set of q normalized vectors.

    ``applicable`` is true when every pairwise overlap magnitude is below
    1/q; in that case the vectors are guaranteed linearly independent
    (every eigenvalue of G - I is below 1 in magnitude, so G is positive
    definite), and ``full_rank`` must follow.
    """
    vectors = list(vectors)
    if len(vectors) < 2:
        raise ValueError(f"need at least two vectors, got {len(vectors)}")
    gram = GramMatrix.from_vectors(vectors)
    max_overlap = gram.max_offdiagonal()
    result = gram_rank(gram)
    return LemmaVerdict(
        applicable=bool(max_overlap < 1.0 / gram.q),
        full_rank=bool(result.rank == gram.q),
        max_overlap=max_overlap,
        rank=result.rank,
    )


def random_nearly_orthogonal_set(
    q: int,
    n_qubits: int,
    rng: np.random.Generator,
    max_overlap: float,
) -> list[StateVector]:
    """A random set of q states whose pairwise overlaps all stay below a cap.

    Perturbs q orthonormal directions (columns of a Haar unitary) by random
    noise, shrinking the noise until the largest pairwise overlap magnitude
    drops under ``max_overlap``.  Used to mass-produce instances where the
    linear-independence criterion applies.
    """
    dim = 2 ** n_qubits
    if q > dim:
        raise ValueError(f"cannot fit {q} independent-ish vectors in dimension {dim}")
    basis = haar_random_unitary(n_qubits, rng).matrix[:, :q].T
    noise = rng.standard_normal((q, dim)) + 1j * rng.standard_normal((q, dim))
    scale = 0.8 * max_overlap
    for _ in range(60):
        vecs = basis + scale * noise
        vecs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
        gram = vecs.conj() @ vecs.T
        off = gram - np.diag(np.diag(gram))
        if float(np.max(np.abs(off))) < max_overlap:
            return [StateVector(v) for v in vecs]
        scale *= 0.5
    raise RuntimeError("noise shrinking failed to reach the overlap cap")


def remark_statistic(q: int, nu: float, samples: int, rng: np.random.Generator) -> float:
    """Largest |eigenvalue of G - I| observed over random unit-overlap Grams.

    Each sample fixes every off-diagonal magnitude to ``nu`` with an
    independent uniform phase, keeping only realizable (PSD) matrices.
    The heuristic prediction for the typical magnitude is nu * sqrt(q)
    (random-walk cancellation of q phased terms); the return value is a
    report to set against that, not a bound.
    """
    if q < 2:
        raise ValueError(f"need q >= 2, got {q}")
    if nu < 0:
        raise ValueError(f"overlap magnitude must be >= 0, got {nu}")
    if samples < 1:
        raise ValueError(f"need at least one sample, got {samples}")
    worst = 0.0
    kept = 0
    attempts = 0
    while kept < samples:
        attempts += 1
        if attempts > 50 * samples:
            raise ValueError(f"could not realize PSD Gram matrices at q={q}, nu={nu}")
        phases = np.exp(2j * np.pi * rng.random((q, q)))
        off = nu * np.triu(phases, k=1)
        g = np.eye(q, dtype=complex) + off + off.conj().T
        eigs = np.linalg.eigvalsh(g)
        if eigs[0] < -PSD_ATOL:
            continue
        kept += 1
        worst = max(worst, float(np.max(np.abs(eigs - 1.0))))
    return worst


def min_register_qubits(epsilon: float, tau: float) -> float:
    """Lower bound (tau/2) * log2(1/epsilon) on program register qubits."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if tau not in _ALLOWED_TAU:
        raise ValueError(f"tau must be one of {_ALLOWED_TAU}, got {tau}")
    return (tau / 2.0) * math.log2(1.0 / epsilon)


def bound_scan(alpha_samples, beta_samples, n_values, tau: float = TAU_PROBABILISTIC):
    """Overlap reports for every (alpha, beta, n) triple.

    Rows with coincident gates carry ``bound_ratio = None`` (division
    guard); everything else reports |overlap| * distance /
    (epsilon^tau * 2), the empirical constant of the overlap bound for
    single-qubit gates.
    """
    alpha_samples = list(alpha_samples)
    beta_samples = list(beta_samples)
    n_values = list(n_values)
    if not alpha_samples or not beta_samples or not n_values:
        raise ValueError("sample sets must be nonempty")
    reports = []
    for n in n_values:
        eps = 2.0 ** (-n)
        for alpha in alpha_samples:
            for beta in beta_samples:
                nu = program_overlap(alpha, beta, n)
                dist = hs_distance(z_rotation(alpha), z_rotation(beta))
                if dist < 1e-12:
                    ratio = None
                else:
                    ratio = abs(nu) * dist / (eps ** tau * 2.0)
                reports.append(
                    OverlapReport(
                        alpha=float(alpha),
                        beta=float(beta),
                        n_qubits=int(n),
                        overlap=nu,
                        distance=dist,
                        epsilon=eps,
                        bound_ratio=ratio,
                    )
                )
    return reports


def max_bound_ratio(reports) -> float:
    """Empirical overlap-bound constant: the largest finite scan ratio."""
    ratios = [r.bound_ratio for r in reports if r.bound_ratio is not None]
    if not ratios:
        raise ValueError("no rows with a defined bound ratio")
    return float(max(ratios))

"""Exact dense simulation of small qubit registers.

State construction, tensor products, gate application on arbitrary qubit
subsets, projective measurement, partial trace, fidelities, and Haar
sampling.  Registers are capped at 16 qubits; everything is plain dense
numpy and double precision.

Conventions
-----------
Qubit 0 is the leftmost ket factor and the most significant bit of the
amplitude index, so ``|101>`` on three qubits sits at index 5.  States and
density matrices are immutable values: every operation returns a new
object and the wrapped arrays are marked read-only, which makes them safe
to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gates import GateMatrix

NORM_ATOL = 1e-12
HERMITIAN_ATOL = 1e-12
PSD_ATOL = 1e-10
MAX_QUBITS = 16


def seeded_rng(seed: int) -> np.random.Generator:
    """The package-wide generator: PCG64 seeded through a SeedSequence."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def trial_rng(seed: int, *path: int) -> np.random.Generator:
    """An independent stream for one Monte Carlo trial (or nested sub-task).

    Streams derived from distinct (seed, path) tuples are statistically
    independent, so trials may run in parallel and still reproduce.
    """
    return np.random.default_rng(np.random.SeedSequence((seed, *path)))


def _check_register_size(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"register size must be between 1 and {MAX_QUBITS}, got {n}")


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state of an n-qubit register.

    ``amplitudes`` has length 2**n and unit 2-norm within 1e-12; both are
    enforced at construction time.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        n = int(amps.size).bit_length() - 1
        if amps.ndim != 1 or amps.size != 2 ** n:
            raise ValueError(f"amplitude array length {amps.size} is not a power of two")
        _check_register_size(n)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_ATOL:
            raise ValueError(f"state is not normalized: |norm - 1| = {abs(norm - 1.0):.3e}")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class DensityMatrix:
    """Mixed state of an n-qubit register.

    Hermitian within 1e-12, unit trace within 1e-12, and positive
    semidefinite down to -1e-10 on the smallest eigenvalue.  Intended for
    small registers (channel outputs, reduced states), not for the full
    16-qubit range.
    """

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        n = int(m.shape[0]).bit_length() - 1
        if m.ndim != 2 or m.shape != (2 ** n, 2 ** n):
            raise ValueError(f"expected a square 2^n x 2^n matrix, got shape {m.shape}")
        _check_register_size(n)
        if not np.allclose(m, m.conj().T, atol=HERMITIAN_ATOL):
            raise ValueError("density matrix is not Hermitian within 1e-12")
        tr = np.trace(m).real
        if abs(tr - 1.0) > NORM_ATOL:
            raise ValueError(f"density matrix trace deviates from 1 by {abs(tr - 1.0):.3e}")
        smallest = float(np.linalg.eigvalsh(m)[0])
        if smallest < -PSD_ATOL:
            raise ValueError(f"density matrix has negative eigenvalue {smallest:.3e}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def n_qubits(self) -> int:
        return int(self.entries.shape[0]).bit_length() - 1

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class MeasurementRecord:
    """One projective measurement: which qubit, the sampled bit, and the
    Born probability of that bit at sampling time."""

    qubit_index: int
    outcome: int
    probability: float


def basis_state(n: int, index: int) -> StateVector:
    """Computational basis state |index> on an n-qubit register."""
    _check_register_size(n)
    if not 0 <= index < 2 ** n:
        raise ValueError(f"basis index {index} out of range for {n} qubits")
    amps = np.zeros(2 ** n, dtype=complex)
    amps[index] = 1.0
    return StateVector(amps)


def from_bits(bits) -> StateVector:
    """Basis state from a bit sequence, first bit most significant."""
    bits = list(bits)
    index = 0
    for b in bits:
        index = (index << 1) | int(b)
    return basis_state(len(bits), index)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Tensor product a (x) b; a's qubits come first."""
    return StateVector(np.kron(a.amplitudes, b.amplitudes))


def pure_density(s: StateVector) -> DensityMatrix:
    """|s><s| as a DensityMatrix."""
    return DensityMatrix(np.outer(s.amplitudes, s.amplitudes.conj()))


def apply_gate(s: StateVector, g: GateMatrix, targets) -> StateVector:
    """Apply gate ``g`` to the listed qubits of ``s``.

    ``targets`` is an ordered qubit list; its k-th entry is wired to the
    k-th qubit slot of the gate (most significant first).  Raises
    ValueError on arity mismatch, duplicate targets, or out-of-range
    indices.
    """
    targets = list(targets)
    n = s.n_qubits
    if g.arity != len(targets):
        raise ValueError(f"gate arity {g.arity} does not match {len(targets)} targets")
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate target qubits: {targets}")
    if any(not 0 <= t < n for t in targets):
        raise ValueError(f"target out of range for {n} qubits: {targets}")

    psi = s.amplitudes.reshape((2,) * n)
    gt = g.matrix.reshape((2,) * (2 * g.arity))
    out = np.tensordot(gt, psi, axes=(list(range(g.arity, 2 * g.arity)), targets))
    out = np.moveaxis(out, list(range(g.arity)), targets)
    return StateVector(out.reshape(-1))


def qubit_outcome_probability(s: StateVector, q: int, outcome: int) -> float:
    """Born probability of reading ``outcome`` on qubit q (no collapse)."""
    n = s.n_qubits
    if not 0 <= q < n:
        raise ValueError(f"qubit {q} out of range for {n} qubits")
    psi = s.amplitudes.reshape((2,) * n)
    branch = np.take(psi, outcome, axis=q)
    return float(np.sum(np.abs(branch) ** 2))


def measure_qubit(s: StateVector, q: int, rng: np.random.Generator):
    """Projective measurement of qubit q in the computational basis.

    Samples by the Born rule from ``rng`` (one uniform draw per call, so
    the outcome sequence is a deterministic function of the stream state),
    collapses, renormalizes, and returns ``(record, post_state)``.
    Probability-zero branches are never selected.
    """
    n = s.n_qubits
    p0 = qubit_outcome_probability(s, q, 0)
    outcome = 0 if rng.random() < p0 else 1
    p = p0 if outcome == 0 else 1.0 - p0

    psi = s.amplitudes.reshape((2,) * n).copy()
    other = np.take(psi, 1 - outcome, axis=q)
    other[...] = 0.0  # view write zeroes the discarded branch
    collapsed = psi.reshape(-1)
    collapsed = collapsed / np.linalg.norm(collapsed)
    return MeasurementRecord(q, outcome, p), StateVector(collapsed)


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the ``keep`` qubits (register order preserved)."""
    keep = sorted(set(keep))
    n = rho.n_qubits
    if not keep:
        raise ValueError("keep list must name at least one qubit")
    if any(not 0 <= q < n for q in keep):
        raise ValueError(f"keep qubits out of range for {n} qubits: {keep}")
    drop = [q for q in range(n) if q not in keep]
    k = len(keep)

    t = rho.entries.reshape((2,) * (2 * n))
    perm = keep + drop + [n + q for q in keep] + [n + q for q in drop]
    t = t.transpose(perm).reshape(2 ** k, 2 ** (n - k), 2 ** k, 2 ** (n - k))
    reduced = np.einsum("ajbj->ab", t)
    return DensityMatrix(reduced)


def state_fidelity(a, b: StateVector) -> float:
    """Fidelity <b|rho_a|b> of a (pure or mixed) against the pure state b.

    For pure ``a`` this is |<a|b>|^2.  Result is clipped into [0, 1] to
    absorb roundoff.
    """
    if isinstance(a, StateVector):
        if a.dim != b.dim:
            raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
        val = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    elif isinstance(a, DensityMatrix):
        if a.dim != b.dim:
            raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
        val = np.vdot(b.amplitudes, a.entries @ b.amplitudes).real
    else:
        raise TypeError(f"expected StateVector or DensityMatrix, got {type(a).__name__}")
    return float(min(max(val, 0.0), 1.0))


def states_equal_up_to_phase(a: StateVector, b: StateVector, atol: float = 1e-10) -> bool:
    """True when a and b differ by at most a global phase."""
    return bool(abs(state_fidelity(a, b) - 1.0) < atol)


def haar_random_state(n: int, rng: np.random.Generator) -> StateVector:
    """A pure n-qubit state drawn from the unitarily invariant measure."""
    _check_register_size(n)
    z = rng.standard_normal(2 ** n) + 1j * rng.standard_normal(2 ** n)
    return StateVector(z / np.linalg.norm(z))


def haar_random_qubit(rng: np.random.Generator) -> StateVector:
    """Single-qubit Haar sample, the averaging measure for gate fidelities."""
    return haar_random_state(1, rng)


def haar_random_unitary(n: int, rng: np.random.Generator) -> GateMatrix:
    """Haar-distributed unitary on n qubits via QR of a Ginibre matrix.

    The R-diagonal phase correction makes the QR output exactly Haar
    rather than merely column-orthonormal.
    """
    dim = 2 ** n
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return GateMatrix(n, q * (d / np.abs(d)))

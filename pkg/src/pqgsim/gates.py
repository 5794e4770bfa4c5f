"""Gate constructors, the phase-rotation family, and operator geometry.

The workhorse here is the one-parameter family of z-axis rotations
``diag(e^{i a}, e^{-i a})``.  Everything else is standard circuit fare:
controlled NOTs, a generic multi-controlled wrapper, the Hilbert-Schmidt
distance between operators, and an Euler-style decomposition of an
arbitrary single-qubit unitary into three such rotations separated by a
fixed conjugator.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

UNITARY_ATOL = 1e-12

_SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
_SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# Fixed conjugator used by euler_compose/euler_decompose: exp(i*pi/4 * sigma_x),
# a quarter turn about x.  It maps sigma_z to -sigma_y, so the middle rotation
# of the three-factor product acts about the y axis and the product realizes
# the standard z-y-z form.  (A half turn exp(i*pi/2 * sigma_x) = i*sigma_x would
# map sigma_z to -sigma_z and collapse the product to one z rotation, which
# cannot reach all of SU(2); see README "Conventions".)
_CONJUGATOR = np.array(
    [[1, 1j], [1j, 1]], dtype=complex
) / np.sqrt(2)


@dataclass(frozen=True)
class GateMatrix:
    """A unitary on ``arity`` qubits, stored densely.

    The row/column index is read as a bitstring over the gate's qubits with
    the first qubit as the most significant bit.
    """

    arity: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        dim = 2 ** self.arity
        if self.arity < 1:
            raise ValueError(f"gate arity must be >= 1, got {self.arity}")
        if m.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix for arity {self.arity}, got {m.shape}")
        if not np.allclose(m.conj().T @ m, np.eye(dim), atol=UNITARY_ATOL):
            raise ValueError("matrix is not unitary within 1e-12")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return 2 ** self.arity

    def dagger(self) -> "GateMatrix":
        return GateMatrix(self.arity, self.matrix.conj().T)

    def __matmul__(self, other: "GateMatrix") -> "GateMatrix":
        if self.arity != other.arity:
            raise ValueError("arity mismatch in gate product")
        return GateMatrix(self.arity, self.matrix @ other.matrix)


@dataclass(frozen=True)
class EulerAngles:
    """Three rotation angles, each in [0, pi), for the z-y-z product form."""

    alpha1: float
    alpha2: float
    alpha3: float

    def __iter__(self):
        return iter((self.alpha1, self.alpha2, self.alpha3))


def canonical_angle(alpha: float) -> float:
    """Reduce an angle mod pi into [0, pi).

    Rotations whose angles differ by pi are the same operator up to a global
    sign, so comparisons of the rotation family happen in this window.
    """
    return float(np.mod(alpha, np.pi))


def z_rotation(alpha: float) -> GateMatrix:
    """The phase rotation diag(e^{i*alpha}, e^{-i*alpha}).

    Accepts any real angle; the matrix is built from the caller's value
    as given (no canonicalization).
    """
    return GateMatrix(1, np.diag([cmath.exp(1j * alpha), cmath.exp(-1j * alpha)]))


def pauli_x() -> GateMatrix:
    return GateMatrix(1, _SIGMA_X)


def pauli_z() -> GateMatrix:
    return GateMatrix(1, _SIGMA_Z)


def hadamard() -> GateMatrix:
    return GateMatrix(1, np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2))


def multi_controlled(g: GateMatrix, k: int) -> GateMatrix:
    """g controlled on k qubits; fires iff every control reads |1>.

    Controls occupy the k leading (most significant) qubit slots, the target
    block the trailing ones.
    """
    if k < 1:
        raise ValueError(f"need at least one control qubit, got {k}")
    dim = 2 ** (k + g.arity)
    m = np.eye(dim, dtype=complex)
    m[-g.dim:, -g.dim:] = g.matrix
    return GateMatrix(k + g.arity, m)


def cnot() -> GateMatrix:
    """Controlled NOT: |0><0| (x) I + |1><1| (x) sigma_x, control first."""
    return multi_controlled(pauli_x(), 1)


def toffoli() -> GateMatrix:
    """Doubly controlled NOT on three qubits, target last."""
    return multi_controlled(pauli_x(), 2)


def hs_distance(u: GateMatrix, v: GateMatrix) -> float:
    """Hilbert-Schmidt distance sqrt(Tr[(U-V)^dag (U-V)]) between gates."""
    if u.arity != v.arity:
        raise ValueError("arity mismatch: cannot compare gates of different size")
    d = u.matrix - v.matrix
    return float(np.sqrt(np.trace(d.conj().T @ d).real.clip(min=0.0)))


def phase_insensitive_close(a: np.ndarray, b: np.ndarray, atol: float = 1e-10) -> bool:
    """True when two same-shape unitaries agree up to a global phase.

    |Tr(A^dag B)| equals the dimension exactly when B = e^{i phi} A.
    """
    a = np.asarray(a)
    dim = a.shape[0]
    overlap = abs(np.trace(a.conj().T @ np.asarray(b))) / dim
    return bool(abs(overlap - 1.0) < atol)


def euler_compose(angles: EulerAngles) -> GateMatrix:
    """Build R(a3) . Xc^dag . R(a2) . Xc . R(a1) from three rotation angles.

    R is ``z_rotation`` and Xc the fixed quarter-turn conjugator, so the
    middle factor is conjugated into a y rotation and the product sweeps all
    of SU(2) up to global phase.
    """
    a1, a2, a3 = angles
    m = (
        z_rotation(a3).matrix
        @ _CONJUGATOR.conj().T
        @ z_rotation(a2).matrix
        @ _CONJUGATOR
        @ z_rotation(a1).matrix
    )
    return GateMatrix(1, m)


def euler_decompose(u: GateMatrix | np.ndarray) -> EulerAngles:
    """Angles (a1, a2, a3) with euler_compose == u up to global phase.

    Degenerate inputs (pure z rotations, or anti-diagonal unitaries where the
    middle angle is pi/2) are tie-broken by a3 = 0 so the output is
    deterministic.

    Raises ValueError for non-unitary input.
    """
    m = u.matrix if isinstance(u, GateMatrix) else np.asarray(u, dtype=complex)
    if m.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got {m.shape}")
    if not np.allclose(m.conj().T @ m, np.eye(2), atol=UNITARY_ATOL):
        raise ValueError("matrix is not unitary within 1e-12")

    # Strip the global phase: v is in SU(2) (branch choice is irrelevant
    # because all comparisons downstream are phase insensitive).
    v = m / cmath.sqrt(np.linalg.det(m))
    a, b = v[0, 0], v[1, 0]

    if abs(b) < 1e-14:
        return EulerAngles(canonical_angle(cmath.phase(a)), 0.0, 0.0)
    if abs(a) < 1e-14:
        return EulerAngles(canonical_angle(cmath.phase(b)), np.pi / 2, 0.0)

    mid = float(np.arctan2(abs(b), abs(a)))
    pa, pb = cmath.phase(a), cmath.phase(b)
    return EulerAngles(
        canonical_angle((pa + pb) / 2),
        canonical_angle(mid),
        canonical_angle((pa - pb) / 2),
    )

"""Programmable phase gates driven by quantum program registers.

A phase rotation ``z_rotation(alpha)`` can be stored in equatorial qubit
states and later applied to unknown data by a fixed circuit.  This module
builds the program states, the controlled-NOT cascade circuit that
consumes them, the measured repeat-until-success executor, the
approximate-gate channel obtained by discarding the program register, and
average-fidelity estimators.

Program register conventions
----------------------------
Two closely related angle ladders appear and both are exposed:

* ``program_state(spec)`` is the stored-program form: qubit l (1-based)
  carries the equatorial state at angle ``2^l * alpha``, i.e. the ladder
  starts at ``2*alpha``.  This is the object the distinguishability
  analysis in :mod:`pqgsim.bounds` works with.
* ``cascade_program(alpha, n)`` is the register the executor circuits
  actually consume to realize ``z_rotation(alpha)``: slot k (1-based)
  carries angle ``2^(k-1) * alpha``, starting at ``alpha`` itself.

The two are the same family under a relabeling,
``program_state(ProgramSpec(a, n)) == cascade_program(2*a, n)``,
and both give failure rate ``2^-n``.  Executors in this module and in
:mod:`pqgsim.remote` always use the ``cascade_program`` ladder, so
``run_probabilistic(d, spec, rng)`` succeeds into
``z_rotation(spec.alpha) |d>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .gates import GateMatrix, cnot, multi_controlled, pauli_x, z_rotation
from .qstate import (
    DensityMatrix,
    StateVector,
    apply_gate,
    basis_state,
    haar_random_qubit,
    measure_qubit,
    pure_density,
    state_fidelity,
    tensor,
    trial_rng,
)

PROB_ATOL = 1e-12
DEFAULT_MAX_ROUNDS = 64


@dataclass(frozen=True)
class ProgramSpec:
    """A stored rotation: angle alpha in [0, pi) and register width n_qubits.

    The failure rate ``epsilon = 2^-n_qubits`` is derived, never stored.
    """

    alpha: float
    n_qubits: int

    def __post_init__(self):
        if not 0.0 <= self.alpha < np.pi:
            raise ValueError(f"alpha must lie in [0, pi), got {self.alpha}")
        if self.n_qubits < 1:
            raise ValueError(f"need at least one program qubit, got {self.n_qubits}")

    @property
    def epsilon(self) -> float:
        return 2.0 ** (-self.n_qubits)


@dataclass(frozen=True)
class GateOutcome:
    """Result of one run of the one-shot probabilistic gate.

    ``success`` is true exactly when the measured program bits are not all
    ones; ``attempts_weight`` is the Born probability of the observed
    program outcome.
    """

    success: bool
    data_state: StateVector
    program_outcome_bits: tuple
    attempts_weight: float


class RusResult(NamedTuple):
    """Repeat-until-success outcome.

    ``rounds_used == max_rounds + 1`` is the exhaustion sentinel: the data
    state is then the accumulated wrong rotation, and callers must check.
    """

    final_state: StateVector
    rounds_used: int
    qubits_consumed: int


def program_qubit(alpha: float) -> StateVector:
    """Equatorial state (e^{i alpha}|0> + e^{-i alpha}|1>)/sqrt(2).

    Equals ``z_rotation(alpha)`` applied to |+>, which is how a party who
    knows alpha prepares it.
    """
    return StateVector(
        np.array([np.exp(1j * alpha), np.exp(-1j * alpha)], dtype=complex) / np.sqrt(2)
    )


def program_state(spec: ProgramSpec) -> StateVector:
    """Stored-program register: qubit l carries angle 2^l * alpha, l = 1..n."""
    amps = np.array([1.0 + 0j])
    for l in range(1, spec.n_qubits + 1):
        amps = np.kron(amps, program_qubit((2 ** l) * spec.alpha).amplitudes)
    return StateVector(amps)


def cascade_program(alpha: float, n: int) -> StateVector:
    """Executor register: slot k carries angle 2^(k-1) * alpha, k = 1..n.

    This is the register that makes the cascade implement
    ``z_rotation(alpha)``; see the module docstring for how it relates to
    ``program_state``.
    """
    if n < 1:
        raise ValueError(f"need at least one program qubit, got {n}")
    amps = np.array([1.0 + 0j])
    for k in range(n):
        amps = np.kron(amps, program_qubit((2 ** k) * alpha).amplitudes)
    return StateVector(amps)


@lru_cache(maxsize=32)
def cascade_unitary(n: int) -> GateMatrix:
    """The (n+1)-qubit cascade: data on qubit 0, program on qubits 1..n.

    Stage l is a NOT on program qubit l controlled on the data qubit and on
    program qubits 1..l-1 all reading |1> (stage 1 is a plain CNOT).  Fed
    with ``|d> (x) cascade_program(alpha, n)`` it leaves every program
    outcome except |1...1> holding ``z_rotation(alpha)|d>`` on the data
    qubit, with the all-ones outcome carrying weight exactly 2^-n.
    """
    if n < 1:
        raise ValueError(f"cascade needs at least one program qubit, got {n}")
    dim = 2 ** (n + 1)
    m = np.eye(dim, dtype=complex)
    x = pauli_x()
    for l in range(1, n + 1):
        stage = np.kron(multi_controlled(x, l).matrix, np.eye(2 ** (n - l)))
        m = stage @ m
    return GateMatrix(n + 1, m)


def _data_after_program_collapse(joint: StateVector, bits) -> StateVector:
    # After all program qubits are measured the register factorizes; slicing
    # at the observed program index recovers the data qubit exactly.
    n_prog = len(bits)
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    col = joint.amplitudes.reshape(2, 2 ** n_prog)[:, idx]
    return StateVector(col / np.linalg.norm(col))


def run_probabilistic(d: StateVector, spec: ProgramSpec, rng: np.random.Generator) -> GateOutcome:
    """One shot of the n-qubit probabilistic gate on data ``d``.

    Applies the cascade to ``|d> (x) cascade_program(spec.alpha, n)`` and
    measures every program qubit.  Success (any outcome but all-ones)
    leaves ``z_rotation(spec.alpha)|d>``; the all-ones failure leaves the
    wrong rotation at angle ``-(2^n - 1) * alpha``.
    """
    if d.n_qubits != 1:
        raise ValueError("data register must be a single qubit")
    n = spec.n_qubits
    joint = tensor(d, cascade_program(spec.alpha, n))
    joint = apply_gate(joint, cascade_unitary(n), range(n + 1))

    bits = []
    weight = 1.0
    state = joint
    for q in range(1, n + 1):
        record, state = measure_qubit(state, q, rng)
        bits.append(record.outcome)
        weight *= record.probability
    bits = tuple(bits)
    return GateOutcome(
        success=any(b == 0 for b in bits),
        data_state=_data_after_program_collapse(state, bits),
        program_outcome_bits=bits,
        attempts_weight=weight,
    )


def cascade_branch(alpha: float, n: int, d: StateVector, outcome_index: int):
    """Exact weight and collapsed data state of one program outcome.

    No sampling: the cascade output is sliced at ``outcome_index`` (the
    program bits read as an integer, all-ones = failure).  Returns
    ``(weight, data_state)``; the weight of the all-ones branch is
    exactly 2^-n.
    """
    if not 0 <= outcome_index < 2 ** n:
        raise ValueError(f"outcome index {outcome_index} out of range for {n} program qubits")
    joint = tensor(d, cascade_program(alpha, n))
    out = apply_gate(joint, cascade_unitary(n), range(n + 1))
    col = out.amplitudes.reshape(2, 2 ** n)[:, outcome_index]
    weight = float(np.sum(np.abs(col) ** 2))
    return weight, StateVector(col / np.sqrt(weight))


def elementary_gate_round(data: StateVector, program: StateVector, rng: np.random.Generator):
    """One measured round of the elementary gate: CNOT then program readout.

    Returns ``(record, new_data)``.  Outcome 0 means the program angle was
    applied to the data qubit, outcome 1 that its inverse was.
    """
    if data.n_qubits != 1 or program.n_qubits != 1:
        raise ValueError("elementary round acts on one data and one program qubit")
    joint = apply_gate(tensor(data, program), cnot(), (0, 1))
    record, collapsed = measure_qubit(joint, 1, rng)
    return record, _data_after_program_collapse(collapsed, (record.outcome,))


def run_repeat_until_success(
    d: StateVector,
    alpha: float,
    rng: np.random.Generator,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> RusResult:
    """Measured several-round executor for ``z_rotation(alpha)``.

    Round k consumes the program qubit at angle ``2^(k-1) * alpha``; each
    heralded failure doubles the correction angle for the next round.  On
    success the data holds ``z_rotation(alpha)|d>``.  Consumption is
    geometric with mean 2 program qubits per session (for unbounded
    rounds); ``max_rounds`` exhaustion is flagged by the
    ``rounds_used == max_rounds + 1`` sentinel.
    """
    if max_rounds < 1:
        raise ValueError(f"max_rounds must be >= 1, got {max_rounds}")
    state = d
    for k in range(1, max_rounds + 1):
        record, state = elementary_gate_round(state, program_qubit((2 ** (k - 1)) * alpha), rng)
        if record.outcome == 0:
            return RusResult(state, k, k)
    return RusResult(state, max_rounds + 1, max_rounds)


@dataclass(frozen=True)
class MixedUnitaryChannel:
    """Probabilistic mixture of unitaries sum_i p_i V_i rho V_i^dag."""

    branches: tuple

    def __post_init__(self):
        branches = tuple((float(p), v) for p, v in self.branches)
        if not branches:
            raise ValueError("channel needs at least one branch")
        total = sum(p for p, _ in branches)
        if any(p < 0 for p, _ in branches) or abs(total - 1.0) > PROB_ATOL:
            raise ValueError(f"branch probabilities must be >= 0 and sum to 1, got sum {total!r}")
        arities = {v.arity for _, v in branches}
        if len(arities) != 1:
            raise ValueError("all branch unitaries must share one arity")
        object.__setattr__(self, "branches", branches)

    @property
    def arity(self) -> int:
        return self.branches[0][1].arity

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        if rho.dim != 2 ** self.arity:
            raise ValueError(f"channel acts on {self.arity} qubits, got dim {rho.dim}")
        out = np.zeros_like(rho.entries)
        for p, v in self.branches:
            out = out + p * (v.matrix @ rho.entries @ v.matrix.conj().T)
        return DensityMatrix(out)

    def apply_pure(self, psi: StateVector) -> DensityMatrix:
        return self.apply(pure_density(psi))


def approx_channel(spec: ProgramSpec) -> MixedUnitaryChannel:
    """The channel left on the data qubit when the program register is ignored.

    With probability ``1 - epsilon`` the stored rotation acts; with
    probability ``epsilon`` the wrong rotation at angle
    ``(1 - 2^n) * alpha`` does.  Equals the partial trace of the full
    cascade output over the program register.
    """
    eps = spec.epsilon
    right = z_rotation(spec.alpha)
    wrong = z_rotation((1 - 2 ** spec.n_qubits) * spec.alpha)
    return MixedUnitaryChannel(((1.0 - eps, right), (eps, wrong)))


class FidelityEstimate(NamedTuple):
    value: float
    stderr: float
    trials: int


def average_fidelity(channel: MixedUnitaryChannel, target: GateMatrix) -> float:
    """Haar-average gate fidelity, closed form for single-qubit channels.

    For a mixed-unitary qubit channel the average of
    <psi| U^dag E(|psi><psi|) U |psi> is
    sum_i p_i (|Tr(U^dag V_i)|^2 + 2) / 6.
    """
    if channel.arity != 1 or target.arity != 1:
        raise ValueError("closed form applies to single-qubit channels and targets")
    total = 0.0
    for p, v in channel.branches:
        overlap = abs(np.trace(target.matrix.conj().T @ v.matrix)) ** 2
        total += p * (overlap + 2.0) / 6.0
    return float(total)


def average_fidelity_mc(
    channel: MixedUnitaryChannel,
    target: GateMatrix,
    trials: int,
    rng: np.random.Generator,
) -> FidelityEstimate:
    """Monte Carlo estimate of the Haar-average gate fidelity.

    Draws ``trials`` Haar states, evaluates the fidelity integrand
    <psi| U^dag E(|psi><psi|) U |psi> branch by branch, and reports the
    sample mean with its standard error.
    """
    if channel.arity != 1 or target.arity != 1:
        raise ValueError("Monte Carlo estimator is wired for single-qubit channels")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    z = rng.standard_normal((trials, 2)) + 1j * rng.standard_normal((trials, 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    values = np.zeros(trials)
    for p, v in channel.branches:
        m = target.matrix.conj().T @ v.matrix
        amp = np.einsum("ti,ij,tj->t", z.conj(), m, z)
        values += p * np.abs(amp) ** 2
    stderr = float(values.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("inf")
    return FidelityEstimate(float(values.mean()), stderr, trials)


def fidelity_integrand(channel: MixedUnitaryChannel, target: GateMatrix, psi: StateVector) -> float:
    """<psi| U^dag E(|psi><psi|) U |psi> for one input state.

    Scalar reference path through the density-matrix machinery; the
    vectorized Monte Carlo loop is checked against it in the tests.
    """
    rotated = StateVector(target.matrix @ psi.amplitudes)
    return state_fidelity(channel.apply_pure(psi), rotated)


def sample_program_outcomes(
    alpha: float, n: int, trials: int, rng: np.random.Generator
) -> np.ndarray:
    """Program-register outcomes for ``trials`` runs of the one-shot gate.

    The cascade is deterministic, so a run is one Born-rule sample from the
    output distribution of the n program qubits; this draws all runs from
    that exact distribution at once (outcome statistics are data
    independent, so the |0> data branch is simulated).  Outcome index
    2^n - 1, all ones, is the failure flag.  Agrees in law with repeated
    ``run_probabilistic`` calls; the tests pin that down.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    joint = tensor(basis_state(1, 0), cascade_program(alpha, n))
    out = apply_gate(joint, cascade_unitary(n), range(n + 1))
    probs = out.probabilities().reshape(2, 2 ** n).sum(axis=0)
    probs = probs / probs.sum()
    return rng.choice(2 ** n, size=trials, p=probs)


def rus_round_counts(
    alpha: float,
    trials: int,
    seed: int,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> np.ndarray:
    """Program qubits consumed by each of ``trials`` repeat-until-success runs.

    Session s draws from the stream ``trial_rng(seed, s)``.  Per-round
    success probabilities are read off the simulated elementary gate along
    the all-failures branch of the |0> data qubit (they are 1/2 every
    round), and each session consumes one uniform per round, so a session
    here reproduces ``run_repeat_until_success(basis_state(1, 0), alpha,
    trial_rng(seed, s), max_rounds)`` draw for draw.  Exhausted sessions
    consume ``max_rounds`` qubits.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    state = basis_state(1, 0)
    success_probs = np.empty(max_rounds)
    for k in range(1, max_rounds + 1):
        joint = apply_gate(tensor(state, program_qubit((2 ** (k - 1)) * alpha)), cnot(), (0, 1))
        cols = joint.amplitudes.reshape(2, 2)
        success_probs[k - 1] = np.sum(np.abs(cols[:, 0]) ** 2)
        # continue down the heralded-failure branch
        state = StateVector(cols[:, 1] / np.linalg.norm(cols[:, 1]))

    counts = np.empty(trials, dtype=np.int64)
    for s in range(trials):
        draws = trial_rng(seed, s).random(max_rounds)
        hits = draws < success_probs
        counts[s] = hits.argmax() + 1 if hits.any() else max_rounds
    return counts


def haar_fidelity_pair(rng: np.random.Generator, gate: GateMatrix):
    """Draw a Haar data qubit and return it with its rotated target.

    Convenience for fidelity spot checks: ``(psi, gate |psi>)``.
    """
    psi = haar_random_qubit(rng)
    return psi, StateVector(gate.matrix @ psi.amplitudes)

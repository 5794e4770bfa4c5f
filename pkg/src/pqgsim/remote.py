"""One-way remote control of a stored rotation over shared entanglement.

Alice knows the rotation angle; Bob holds the data qubit.  Alice turns
each shared Bell pair into one program qubit on Bob's side by measuring
her half in a rotated equatorial basis and sending the one-bit outcome
(remote state preparation: known equatorial states cost exactly one ebit
plus one classical bit each).  Bob corrects with sigma_z on bit 1 and
feeds the program qubit into the elementary gate round from
:mod:`pqgsim.proggate`.

In the default unidirectional mode nothing ever flows from Bob to Alice:
she streams program qubits for ``max_rounds`` rounds speculatively and
Bob simply stops consuming once a round succeeds.  The resource ledger
therefore distinguishes what Alice prepared (one ebit + one classical bit
per streamed qubit) from what Bob consumed (two program qubits per
session on average).  A feedback mode, in which Bob reports each round's
outcome so Alice can stop early, exists for cost comparison.

Parties interact only through a transport: an in-process pair of ordered
message queues, or one TCP connection per session carrying the
newline-delimited frames of :func:`serialize`.  Both modes drive the same
party functions and the same derived random streams, so ledgers agree
bit for bit between them under one seed.

Simulation note: a classical simulator must materialize Bob's half of
each Bell pair somewhere, so the quantum substrate on Bob's side is
instantiated from the angle and the received bit
(:func:`steered_half`); the party logic itself never branches on the
angle, and the wire carries classical bits only.
"""

from __future__ import annotations

import socket as socket_module
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from queue import Empty, Queue
from typing import NamedTuple

import numpy as np

from .gates import GateMatrix, cnot, pauli_z, z_rotation
from .proggate import DEFAULT_MAX_ROUNDS, ProgramSpec, elementary_gate_round, program_qubit
from .qstate import (
    StateVector,
    apply_gate,
    basis_state,
    haar_random_qubit,
    measure_qubit,
    state_fidelity,
    tensor,
    trial_rng,
)

PROTOCOL_VERSION = 1

ALICE_TO_BOB = "alice_to_bob"
BOB_TO_ALICE = "bob_to_alice"

_PHI_PLUS = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / np.sqrt(2)


class ProtocolError(Exception):
    """A party violated the protocol contract (pair reuse, bad frame kind...)."""


class SessionError(Exception):
    """Transport-level failure; carries the ledger accumulated so far."""

    def __init__(self, message: str, ledger: "ResourceLedger | None" = None):
        super().__init__(message)
        self.ledger = ledger


class WireParseError(ValueError):
    """Malformed wire frame; ``offset`` is the byte position of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class MessageKind(str, Enum):
    HELLO = "HELLO"
    RSP_BIT = "RSP_BIT"
    ROUND_RESULT = "ROUND_RESULT"
    DONE = "DONE"


_PAYLOAD_KINDS = (MessageKind.RSP_BIT, MessageKind.ROUND_RESULT)


class WireMessage(NamedTuple):
    """One frame: kind, round number, and a one-int payload.

    The payload is the classical bit for RSP_BIT / ROUND_RESULT, the
    protocol version for HELLO, and a status code for DONE.
    """

    kind: MessageKind
    round: int
    payload: int


def serialize(message: WireMessage) -> bytes:
    """Render one frame: ``KIND ROUND PAYLOAD\\n`` in ASCII."""
    return f"{message.kind.value} {message.round} {message.payload}\n".encode("ascii")


def deserialize(data: bytes) -> WireMessage:
    """Parse exactly one frame; raises WireParseError naming the byte offset."""
    if not data:
        raise WireParseError("empty frame", 0)
    if not data.endswith(b"\n"):
        raise WireParseError("truncated frame, missing newline", len(data))
    body = data[:-1]
    if b"\n" in body:
        raise WireParseError("embedded newline", body.index(b"\n"))
    parts = body.split(b" ")
    if len(parts) != 3:
        bad = min(len(body), sum(len(p) + 1 for p in parts[:3]))
        raise WireParseError(f"expected 3 fields, got {len(parts)}", bad)

    kind_raw, round_raw, payload_raw = parts
    offsets = (0, len(kind_raw) + 1, len(kind_raw) + len(round_raw) + 2)
    try:
        kind = MessageKind(kind_raw.decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise WireParseError(f"unknown message kind {kind_raw!r}", offsets[0]) from None
    if not round_raw.isdigit():
        raise WireParseError(f"round field {round_raw!r} is not a nonnegative integer", offsets[1])
    if not (payload_raw.isdigit() or (payload_raw[:1] == b"-" and payload_raw[1:].isdigit())):
        raise WireParseError(f"payload field {payload_raw!r} is not an integer", offsets[2])
    payload = int(payload_raw)
    if kind in _PAYLOAD_KINDS and payload not in (0, 1):
        raise WireParseError(f"bit payload must be 0 or 1, got {payload}", offsets[2])
    return WireMessage(kind, int(round_raw), payload)


# ---------------------------------------------------------------------------
# Entanglement and remote state preparation
# ---------------------------------------------------------------------------


@dataclass
class EntangledPair:
    """One shared Bell pair (qubit 0 Alice, qubit 1 Bob); single use."""

    joint: StateVector
    consumed: bool = False


def bell_pair() -> EntangledPair:
    """A fresh perfect pair (|00> + |11>)/sqrt(2)."""
    return EntangledPair(StateVector(_PHI_PLUS))


def steered_half(alpha: float, bit: int) -> StateVector:
    """Receiver's half after the sender measured and reported ``bit``.

    bit 0 leaves the target equatorial state directly; bit 1 leaves its
    sigma_z image, which the receiver's correction undoes.
    """
    state = program_qubit(alpha)
    if bit == 0:
        return state
    return StateVector(pauli_z().matrix @ state.amplitudes)


def rsp_equatorial(alpha: float, pair: EntangledPair, rng: np.random.Generator):
    """Remotely prepare ``program_qubit(alpha)`` over one Bell pair.

    The sender measures her half in the basis {equatorial(-alpha), its
    sigma_z partner}; either outcome occurs with probability 1/2 and
    steers the receiver's half onto the target up to a sigma_z the
    receiver applies on bit 1.  Returns ``(bit, receiver_state)`` with the
    correction already applied; the pair is marked consumed.
    """
    if pair.consumed:
        raise ProtocolError("entangled pair already consumed")
    if abs(state_fidelity(pair.joint, StateVector(_PHI_PLUS)) - 1.0) > 1e-12:
        raise ProtocolError("pair is not a perfect Bell state")

    m0 = np.array([np.exp(-1j * alpha), np.exp(1j * alpha)], dtype=complex) / np.sqrt(2)
    m1 = pauli_z().matrix @ m0
    basis_change = GateMatrix(1, np.column_stack([m0, m1]).conj().T)

    rotated = apply_gate(pair.joint, basis_change, (0,))
    record, collapsed = measure_qubit(rotated, 0, rng)
    half = collapsed.amplitudes.reshape(2, 2)[record.outcome, :]
    receiver = StateVector(half / np.linalg.norm(half))
    if record.outcome == 1:
        receiver = StateVector(pauli_z().matrix @ receiver.amplitudes)
    pair.consumed = True
    return record.outcome, receiver


@dataclass
class ResourceLedger:
    """Session resource counters.

    The first three count what the sender prepared and are always equal
    (one ebit and one classical bit per delivered program qubit);
    ``rounds`` counts the gate rounds the receiver actually ran, i.e. the
    program qubits consumed.
    """

    ebits_used: int = 0
    cbits_sent: int = 0
    program_qubits_delivered: int = 0
    rounds: int = 0

    def record_preparation(self, n: int = 1) -> None:
        self.ebits_used += n
        self.cbits_sent += n
        self.program_qubits_delivered += n

    def record_rounds(self, n: int = 1) -> None:
        self.rounds += n

    @property
    def qubits_consumed(self) -> int:
        return self.rounds

    def conserved(self) -> bool:
        return self.ebits_used == self.cbits_sent == self.program_qubits_delivered


def teleport_program(
    spec: ProgramSpec,
    pairs,
    rng: np.random.Generator,
    ledger: ResourceLedger,
) -> list[StateVector]:
    """Deliver the whole stored-program register over ``spec.n_qubits`` pairs.

    Qubit l (1-based) is remotely prepared at angle ``2^l * alpha``, the
    stored-program ladder, so the receiver ends up holding
    ``program_state(spec)`` as a product of singles.  Costs exactly one
    ebit plus one classical bit per program qubit, tallied on ``ledger``.
    """
    pairs = list(pairs)
    n = spec.n_qubits
    if len(pairs) < n:
        raise ProtocolError(f"need {n} fresh pairs, got {len(pairs)}")
    if any(p.consumed for p in pairs[:n]):
        raise ProtocolError("all pairs must be fresh")
    delivered = []
    for l in range(1, n + 1):
        _, received = rsp_equatorial((2 ** l) * spec.alpha, pairs[l - 1], rng)
        delivered.append(received)
        ledger.record_preparation()
    return delivered


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------


@dataclass
class TransportLog:
    """Frame counts by (direction, kind), tallied at send time."""

    sent: dict = field(default_factory=dict)

    def record(self, direction: str, kind: MessageKind, n: int = 1) -> None:
        key = (direction, kind)
        self.sent[key] = self.sent.get(key, 0) + n

    def count(self, direction: str, kind: MessageKind | None = None) -> int:
        if kind is not None:
            return self.sent.get((direction, kind), 0)
        return sum(v for (d, _), v in self.sent.items() if d == direction)

    def payload_count(self, direction: str) -> int:
        return sum(self.count(direction, k) for k in _PAYLOAD_KINDS)


class QueueEndpoint:
    """One side of the in-process transport: ordered, thread-safe queues."""

    def __init__(self, outbox: Queue, inbox: Queue, direction: str, log: TransportLog):
        self._outbox = outbox
        self._inbox = inbox
        self._direction = direction
        self._log = log

    def send(self, message: WireMessage) -> None:
        self._log.record(self._direction, message.kind)
        self._outbox.put(message)

    def recv(self, timeout: float = 10.0) -> WireMessage:
        try:
            return self._inbox.get(timeout=timeout)
        except Empty:
            raise SessionError("transport starved: no frame arrived") from None

    def close(self) -> None:
        pass


class InProcessTransport:
    """Paired queue endpoints plus a frame log (optionally shared)."""

    def __init__(self, log: TransportLog | None = None):
        self.log = log if log is not None else TransportLog()
        a_to_b: Queue = Queue()
        b_to_a: Queue = Queue()
        self.alice = QueueEndpoint(a_to_b, b_to_a, ALICE_TO_BOB, self.log)
        self.bob = QueueEndpoint(b_to_a, a_to_b, BOB_TO_ALICE, self.log)


class SocketEndpoint:
    """One side of a TCP session; frames are the serialized wire format."""

    def __init__(self, sock: socket_module.socket, direction: str, log: TransportLog):
        self._sock = sock
        self._reader = sock.makefile("rb")
        self._direction = direction
        self._log = log

    def send(self, message: WireMessage) -> None:
        self._log.record(self._direction, message.kind)
        try:
            self._sock.sendall(serialize(message))
        except OSError as exc:
            raise SessionError(f"socket send failed: {exc}") from exc

    def recv(self, timeout: float = 10.0) -> WireMessage:
        self._sock.settimeout(timeout)
        line = self._reader.readline()
        if not line:
            raise SessionError("connection closed mid-session")
        return deserialize(line)

    def close(self) -> None:
        try:
            self._reader.close()
        finally:
            self._sock.close()


# ---------------------------------------------------------------------------
# Party state machines
# ---------------------------------------------------------------------------


class BobOutcome(NamedTuple):
    final_state: StateVector
    consumed: int
    succeeded: bool
    prepared_seen: int


class SessionResult(NamedTuple):
    """Spec surface of one session: final data state and the ledger, plus
    the success flag (false only on max_rounds exhaustion)."""

    final_state: StateVector
    ledger: ResourceLedger
    succeeded: bool


def run_alice(
    endpoint,
    alpha: float,
    max_rounds: int,
    rng: np.random.Generator,
    feedback: bool = False,
) -> int:
    """Sender side: stream program-qubit bits; returns qubits prepared.

    Each round spends one Bell pair: the rotated-basis measurement yields
    either outcome with probability exactly 1/2 (the pair is maximally
    entangled), so the outcome stream is drawn directly; the steered
    receiver states are instantiated on the receiving side.  Without
    feedback Alice streams all ``max_rounds`` rounds; with feedback she
    stops once Bob reports success.
    """
    endpoint.send(WireMessage(MessageKind.HELLO, 0, PROTOCOL_VERSION))
    draws = rng.random(max_rounds)
    prepared = 0
    for k in range(1, max_rounds + 1):
        bit = 0 if draws[k - 1] < 0.5 else 1
        endpoint.send(WireMessage(MessageKind.RSP_BIT, k, bit))
        prepared += 1
        if feedback:
            reply = endpoint.recv()
            if reply.kind != MessageKind.ROUND_RESULT or reply.round != k:
                raise ProtocolError(f"expected ROUND_RESULT for round {k}, got {reply}")
            if reply.payload == 1:
                break
    endpoint.send(WireMessage(MessageKind.DONE, prepared, 0))
    return prepared


def run_bob(
    endpoint,
    d: StateVector,
    alpha: float,
    max_rounds: int,
    rng: np.random.Generator,
    feedback: bool = False,
) -> BobOutcome:
    """Receiver side: correct each steered qubit and run gate rounds.

    Consumes incoming program qubits until one round succeeds, then lets
    the rest of the stream drain unused (unidirectional mode) or reports
    the success so the sender stops (feedback mode).
    """
    hello = endpoint.recv()
    if hello.kind != MessageKind.HELLO:
        raise ProtocolError(f"session must open with HELLO, got {hello.kind}")
    if hello.payload != PROTOCOL_VERSION:
        raise SessionError(f"protocol version mismatch: {hello.payload} != {PROTOCOL_VERSION}")

    state = d
    consumed = 0
    succeeded = False
    prepared_seen = 0
    while True:
        message = endpoint.recv()
        if message.kind == MessageKind.DONE:
            break
        if message.kind != MessageKind.RSP_BIT:
            raise ProtocolError(f"unexpected frame kind {message.kind}")
        prepared_seen += 1
        if succeeded or consumed >= max_rounds:
            continue  # delivered but left unconsumed

        theta = (2 ** consumed) * alpha
        program = steered_half(theta, message.payload)
        if message.payload == 1:
            program = StateVector(pauli_z().matrix @ program.amplitudes)
        record, state = elementary_gate_round(state, program, rng)
        consumed += 1
        if record.outcome == 0:
            succeeded = True
        if feedback:
            endpoint.send(
                WireMessage(MessageKind.ROUND_RESULT, message.round, 1 if succeeded else 0)
            )
    if feedback:
        endpoint.send(WireMessage(MessageKind.DONE, consumed, 0 if succeeded else 1))
    return BobOutcome(state, consumed, succeeded, prepared_seen)


def remote_control_session(
    d: StateVector,
    alpha: float,
    transport: InProcessTransport | None = None,
    rng: np.random.Generator | None = None,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    feedback: bool = False,
) -> SessionResult:
    """Run one full session in process and return (final state, ledger).

    The supplied ``rng`` is split into independent sender/receiver streams
    (the same derivation the two-process socket mode uses).  In the
    default unidirectional mode the sender's whole stream is produced
    first and the receiver then drains it; with feedback the parties run
    in two threads and strictly alternate.
    """
    if rng is None:
        raise ValueError("an explicit rng is required")
    if d.n_qubits != 1:
        raise ValueError("data register must be a single qubit")
    transport = transport if transport is not None else InProcessTransport()
    alice_rng, bob_rng = rng.spawn(2)

    if not feedback:
        prepared = run_alice(transport.alice, alpha, max_rounds, alice_rng)
        outcome = run_bob(transport.bob, d, alpha, max_rounds, bob_rng)
    else:
        holder = {}

        def _alice():
            holder["prepared"] = run_alice(
                transport.alice, alpha, max_rounds, alice_rng, feedback=True
            )

        thread = threading.Thread(target=_alice, daemon=True)
        thread.start()
        outcome = run_bob(transport.bob, d, alpha, max_rounds, bob_rng, feedback=True)
        thread.join(timeout=10.0)
        if thread.is_alive():
            raise SessionError("sender thread did not finish")
        prepared = holder["prepared"]

    if prepared != outcome.prepared_seen:
        raise ProtocolError(
            f"prepared/seen mismatch: {prepared} != {outcome.prepared_seen}"
        )
    ledger = ResourceLedger()
    ledger.record_preparation(prepared)
    ledger.record_rounds(outcome.consumed)
    return SessionResult(outcome.final_state, ledger, outcome.succeeded)


# ---------------------------------------------------------------------------
# Multi-session drivers (shared by the CLI and the acceptance suite)
# ---------------------------------------------------------------------------


class SessionRecord(NamedTuple):
    session: int
    consumed: int
    prepared: int
    succeeded: bool
    fidelity: float


def _session_rngs(seed: int, session: int):
    parent = trial_rng(seed, session, 0)
    return parent.spawn(2)


def _session_data(seed: int, session: int) -> StateVector:
    return haar_random_qubit(trial_rng(seed, session, 1))


def run_sessions(
    alpha: float,
    trials: int,
    seed: int,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    feedback: bool = False,
):
    """Run ``trials`` full in-process sessions with per-session streams.

    Session s draws its Haar data qubit from ``trial_rng(seed, s, 1)`` and
    its party streams from ``trial_rng(seed, s, 0)``, the exact derivation
    the socket mode applies, so ledgers are comparable across modes.
    Returns ``(records, shared transport log)``.
    """
    log = TransportLog()
    records = []
    target_gate = z_rotation(alpha)
    for s in range(trials):
        transport = InProcessTransport(log)
        alice_rng, bob_rng = _session_rngs(seed, s)
        d = _session_data(seed, s)
        if not feedback:
            prepared = run_alice(transport.alice, alpha, max_rounds, alice_rng)
            outcome = run_bob(transport.bob, d, alpha, max_rounds, bob_rng)
        else:
            result = remote_control_session(
                d, alpha, transport, trial_rng(seed, s, 0), max_rounds, feedback=True
            )
            records.append(
                SessionRecord(
                    s,
                    result.ledger.rounds,
                    result.ledger.program_qubits_delivered,
                    result.succeeded,
                    state_fidelity(result.final_state, _rotated(target_gate, d)),
                )
            )
            continue
        records.append(
            SessionRecord(
                s,
                outcome.consumed,
                prepared,
                outcome.succeeded,
                state_fidelity(outcome.final_state, _rotated(target_gate, d)),
            )
        )
    return records, log


def _rotated(gate: GateMatrix, d: StateVector) -> StateVector:
    return StateVector(gate.matrix @ d.amplitudes)


class SessionBatch(NamedTuple):
    """Vectorized unidirectional session statistics.

    ``consumed`` holds per-session round counts; ``fidelity_by_rounds``
    maps each observed count to the fidelity of that branch's final state
    against the target rotation (sessions with equal counts share the
    exact same branch state).
    """

    consumed: np.ndarray
    prepared_per_session: int
    fidelity_by_rounds: dict
    log: TransportLog
    all_succeeded: bool


def session_statistics(
    alpha: float,
    trials: int,
    seed: int,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    data: StateVector | None = None,
) -> SessionBatch:
    """Unidirectional session statistics at scale.

    Mirrors :func:`run_sessions` draw for draw on the receiver stream
    (``trial_rng(seed, s, 0).spawn(2)[1]``, one uniform per executed
    round) while evaluating the per-round success probabilities and final
    branch states once through the actual gate pipeline; the frame tally
    is exact because the unidirectional flow is nonadaptive (HELLO +
    max_rounds RSP_BITs + DONE from the sender, nothing back).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    d = data if data is not None else basis_state(1, 0)
    if d.n_qubits != 1:
        raise ValueError("data register must be a single qubit")

    # Success probability and post-state of every round along the
    # all-failures branch, plus the final state after a success at round k.
    cnot_gate = cnot()
    success_probs = np.empty(max_rounds)
    final_by_rounds = {}
    state = d
    for k in range(1, max_rounds + 1):
        program = program_qubit((2 ** (k - 1)) * alpha)
        joint = apply_gate(tensor(state, program), cnot_gate, (0, 1))
        cols = joint.amplitudes.reshape(2, 2)
        success_probs[k - 1] = np.sum(np.abs(cols[:, 0]) ** 2)
        final_by_rounds[k] = StateVector(cols[:, 0] / np.linalg.norm(cols[:, 0]))
        state = StateVector(cols[:, 1] / np.linalg.norm(cols[:, 1]))

    counts = np.empty(trials, dtype=np.int64)
    succeeded = np.empty(trials, dtype=bool)
    for s in range(trials):
        _, bob_rng = _session_rngs(seed, s)
        draws = bob_rng.random(max_rounds)
        hits = draws < success_probs
        succeeded[s] = bool(hits.any())
        counts[s] = hits.argmax() + 1 if succeeded[s] else max_rounds

    target = _rotated(z_rotation(alpha), d)
    fidelity_by_rounds = {
        int(k): state_fidelity(final_by_rounds[int(k)], target)
        for k in np.unique(counts[succeeded])
    }

    log = TransportLog()
    log.record(ALICE_TO_BOB, MessageKind.HELLO, trials)
    log.record(ALICE_TO_BOB, MessageKind.RSP_BIT, trials * max_rounds)
    log.record(ALICE_TO_BOB, MessageKind.DONE, trials)
    return SessionBatch(counts, max_rounds, fidelity_by_rounds, log, bool(succeeded.all()))


# ---------------------------------------------------------------------------
# Socket mode
# ---------------------------------------------------------------------------


class RemoteServer:
    """Receiver-side TCP server: one connection per session, in order."""

    def __init__(self, host: str, port: int):
        self._listener = socket_module.socket(socket_module.AF_INET, socket_module.SOCK_STREAM)
        self._listener.setsockopt(socket_module.SOL_SOCKET, socket_module.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(8)

    @property
    def port(self) -> int:
        return self._listener.getsockname()[1]

    def serve(
        self,
        alpha: float,
        trials: int,
        seed: int,
        max_rounds: int = DEFAULT_MAX_ROUNDS,
    ):
        """Accept ``trials`` sequential sessions; returns (records, log)."""
        log = TransportLog()
        records = []
        target_gate = z_rotation(alpha)
        try:
            for s in range(trials):
                conn, _ = self._listener.accept()
                endpoint = SocketEndpoint(conn, BOB_TO_ALICE, log)
                try:
                    _, bob_rng = _session_rngs(seed, s)
                    d = _session_data(seed, s)
                    outcome = run_bob(endpoint, d, alpha, max_rounds, bob_rng)
                    records.append(
                        SessionRecord(
                            s,
                            outcome.consumed,
                            outcome.prepared_seen,
                            outcome.succeeded,
                            state_fidelity(outcome.final_state, _rotated(target_gate, d)),
                        )
                    )
                finally:
                    endpoint.close()
        finally:
            self._listener.close()
        return records, log


def run_remote_client(
    host: str,
    port: int,
    alpha: float,
    trials: int,
    seed: int,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    connect_timeout: float = 10.0,
):
    """Sender side of the socket mode: one connection per session.

    Returns ``(prepared counts per session, log)``.
    """
    log = TransportLog()
    prepared_all = []
    for s in range(trials):
        sock = _connect_with_retry(host, port, connect_timeout)
        endpoint = SocketEndpoint(sock, ALICE_TO_BOB, log)
        try:
            alice_rng, _ = _session_rngs(seed, s)
            prepared_all.append(run_alice(endpoint, alpha, max_rounds, alice_rng))
        finally:
            endpoint.close()
    return prepared_all, log


def _connect_with_retry(host: str, port: int, timeout: float) -> socket_module.socket:
    deadline = time.monotonic() + timeout
    while True:
        try:
            return socket_module.create_connection((host, port), timeout=timeout)
        except OSError:
            if time.monotonic() > deadline:
                raise SessionError(f"could not connect to {host}:{port}") from None
            time.sleep(0.02)

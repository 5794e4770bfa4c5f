"""Batch experiment runner.

Subcommands: ``run-gate``, ``fidelity``, ``bounds``, ``remote``, ``rus``.
Every command takes an explicit ``--seed`` (no environment fallback) and
emits a deterministic JSON or CSV report: identical flags and seed give
byte-identical output.  Exit status: 0 all checks passed, 1 some check
failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from . import bounds as bnd
from . import proggate as pg
from . import remote as rmt
from .gates import z_rotation
from .qstate import StateVector, haar_random_qubit, state_fidelity, trial_rng
from .reports import Report
from .stats import (
    CHI2_3SIGMA,
    binomial_sigma,
    chi2_statistic,
    geometric_tail_bins,
    within_three_sigma,
)


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pqgsim",
        description="Programmable quantum gate experiments: run them, check them, report them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, alpha=False, n=False, trials=False, grid=False, max_rounds=False):
        if alpha:
            p.add_argument("--alpha", type=float, required=True, help="stored rotation angle in [0, pi)")
        if n:
            p.add_argument("--n", type=int, required=True, help="program register qubits")
        if trials:
            p.add_argument("--trials", type=int, required=True, help="number of Monte Carlo trials/sessions")
        p.add_argument("--seed", type=int, required=True, help="RNG seed (explicit, no env fallback)")
        if grid:
            p.add_argument("--grid", type=int, default=None, help="grid size for sweeps")
        if max_rounds:
            p.add_argument("--max-rounds", type=int, default=pg.DEFAULT_MAX_ROUNDS, help="round cap per session")
        p.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
        p.add_argument("--out", default=None, help="output path (default: stdout)")

    p = sub.add_parser("run-gate", help="one-shot probabilistic gate statistics")
    common(p, alpha=True, n=True, trials=True)
    p.set_defaults(func=cmd_run_gate)

    p = sub.add_parser("fidelity", help="approximate-gate average fidelity sweep")
    common(p, n=True, trials=True, grid=True)
    p.set_defaults(func=cmd_fidelity)

    p = sub.add_parser("bounds", help="overlap scan, independence battery, register bound table")
    common(p, n=True, trials=True, grid=True)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("rus", help="repeat-until-success consumption statistics")
    common(p, alpha=True, trials=True, max_rounds=True)
    p.set_defaults(func=cmd_rus)

    p = sub.add_parser("remote", help="one-way remote control sessions (in-process or socket)")
    common(p, alpha=True, trials=True, max_rounds=True)
    p.add_argument("--listen", default=None, metavar="ADDR", help="serve the receiver side on HOST:PORT")
    p.add_argument("--connect", default=None, metavar="ADDR", help="drive the sender side against HOST:PORT")
    p.set_defaults(func=cmd_remote)

    return parser


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


def _config_dict(args, fields) -> dict:
    cfg = {name: getattr(args, name.replace("-", "_")) for name in fields}
    cfg["format"] = args.format
    cfg["out"] = args.out
    return cfg


def _finish(report: Report, args) -> int:
    report.write(args.format, args.out)
    return 0 if report.all_passed() else 1


def cmd_run_gate(args) -> int:
    _require(args.n >= 1, "--n must be >= 1")
    _require(0.0 <= args.alpha < np.pi, "--alpha must lie in [0, pi)")
    _require(args.trials >= 1, "--trials must be >= 1")
    spec = pg.ProgramSpec(args.alpha, args.n)
    report = Report("run-gate", _config_dict(args, ("alpha", "n", "trials", "seed")), __version__)

    outcomes = pg.sample_program_outcomes(args.alpha, args.n, args.trials, trial_rng(args.seed, 0))
    failure_index = 2 ** args.n - 1
    success_rate = float(np.mean(outcomes != failure_index))
    expected = 1.0 - spec.epsilon
    counts = np.bincount(outcomes, minlength=2 ** args.n)
    for idx in range(2 ** args.n):
        report.results.append(
            {
                "outcome": format(idx, f"0{args.n}b"),
                "count": int(counts[idx]),
                "frequency": float(counts[idx] / args.trials),
                "is_failure_flag": idx == failure_index,
            }
        )

    sigma = binomial_sigma(expected, args.trials)
    report.add_check(
        "success_rate_within_3_sigma", within_three_sigma(success_rate, expected, sigma),
        success_rate, expected, 3 * sigma,
    )

    # Exact amplitude-level branch checks (no sampling): every success
    # outcome must hold the stored rotation, the all-ones branch its wrong
    # cousin, with the all-ones weight at exactly 2^-n.
    d = haar_random_qubit(trial_rng(args.seed, 1))
    target = z_rotation(args.alpha)
    wrong = z_rotation((1 - 2 ** args.n) * args.alpha)
    rotated = _rotate(target, d)
    worst_success = 1.0
    for idx in range(2 ** args.n - 1):
        _, branch = pg.cascade_branch(args.alpha, args.n, d, idx)
        worst_success = min(worst_success, state_fidelity(branch, rotated))
    fail_weight, fail_branch = pg.cascade_branch(args.alpha, args.n, d, failure_index)
    report.add_check("success_branch_fidelity", worst_success >= 1.0 - 1e-10, worst_success, 1.0, 1e-10)
    report.add_check(
        "failure_branch_fidelity",
        state_fidelity(fail_branch, _rotate(wrong, d)) >= 1.0 - 1e-10,
        state_fidelity(fail_branch, _rotate(wrong, d)), 1.0, 1e-10,
    )
    report.add_check("failure_weight_exact", abs(fail_weight - spec.epsilon) < 1e-12, fail_weight, spec.epsilon, 1e-12)
    return _finish(report, args)


def _rotate(gate, d):
    from .qstate import StateVector

    return StateVector(gate.matrix @ d.amplitudes)


def cmd_fidelity(args) -> int:
    _require(args.n >= 1, "--n must be >= 1")
    _require(args.trials >= 1, "--trials must be >= 1")
    grid = args.grid if args.grid is not None else 32
    _require(grid >= 1, "--grid must be >= 1")
    report = Report("fidelity", _config_dict(args, ("n", "trials", "seed")) | {"grid": grid}, __version__)

    floor = 1.0 - 2.0 ** (-args.n)
    worst_floor_margin = float("inf")
    worst_agreement = 0.0
    for j in range(grid):
        alpha = np.pi * j / grid
        spec = pg.ProgramSpec(alpha, args.n)
        channel = pg.approx_channel(spec)
        target = z_rotation(alpha)
        closed = pg.average_fidelity(channel, target)
        mc = pg.average_fidelity_mc(channel, target, args.trials, trial_rng(args.seed, j))
        deviation = abs(mc.value - closed) / mc.stderr if mc.stderr > 0 else 0.0
        worst_agreement = max(worst_agreement, deviation)
        worst_floor_margin = min(worst_floor_margin, closed - floor)
        report.results.append(
            {
                "alpha": alpha,
                "n": args.n,
                "mc_fidelity": mc.value,
                "mc_stderr": mc.stderr,
                "closed_form": closed,
                "floor": floor,
                "stderr_deviation": deviation,
            }
        )

    report.add_check("fidelity_floor_every_row", worst_floor_margin >= -1e-12, worst_floor_margin, 0.0)
    report.add_check("mc_vs_closed_form_4_stderr", worst_agreement <= 4.0, worst_agreement, 0.0, 4.0)
    self_fid = pg.average_fidelity(
        pg.MixedUnitaryChannel(((1.0, z_rotation(0.4)),)), z_rotation(0.4)
    )
    report.add_check("self_fidelity_is_one", abs(self_fid - 1.0) < 1e-12, self_fid, 1.0, 1e-12)
    return _finish(report, args)


def cmd_bounds(args) -> int:
    _require(args.n >= 1, "--n must be >= 1")
    _require(args.trials >= 1, "--trials must be >= 1")
    grid = args.grid if args.grid is not None else 100
    _require(grid >= 2, "--grid must be >= 2")
    report = Report("bounds", _config_dict(args, ("n", "trials", "seed")) | {"grid": grid}, __version__)

    alphas = [np.pi * j / grid for j in range(grid)]
    scan = bnd.bound_scan(alphas, alphas, [args.n])
    for row in scan:
        report.results.append(
            {
                "alpha": row.alpha,
                "beta": row.beta,
                "n": row.n_qubits,
                "overlap": row.overlap,
                "distance": row.distance,
                "epsilon": row.epsilon,
                "bound_ratio": row.bound_ratio,
            }
        )
    report.add_check(
        "empirical_bound_constant", True, bnd.max_bound_ratio(scan), None, None
    )

    rng = trial_rng(args.seed, 0)
    violations = 0
    for _ in range(args.trials):
        q = int(rng.integers(2, 9))
        vectors = bnd.random_nearly_orthogonal_set(q, 6, rng, max_overlap=1.0 / q)
        verdict = bnd.lemma_check(vectors)
        if verdict.applicable and not verdict.full_rank:
            violations += 1
    report.add_check("independence_battery_violations", violations == 0, violations, 0)

    bound_ok = True
    for n in range(1, 9):
        needed = bnd.min_register_qubits(2.0 ** (-n), bnd.TAU_PROBABILISTIC)
        bound_ok = bound_ok and (n >= needed)
    report.add_check("register_bound_n_1_to_8", bound_ok, bound_ok, True)

    delta = np.pi / 64
    overlaps = [abs(bnd.program_overlap(delta, 0.0, n)) for n in range(1, 9)]
    monotone = all(overlaps[i + 1] <= overlaps[i] + 1e-15 for i in range(len(overlaps) - 1))
    report.add_check("overlap_nonincreasing_in_n", monotone, overlaps, None)
    return _finish(report, args)


def cmd_rus(args) -> int:
    _require(0.0 <= args.alpha < np.pi, "--alpha must lie in [0, pi)")
    _require(args.trials >= 1, "--trials must be >= 1")
    _require(args.max_rounds >= 1, "--max-rounds must be >= 1")
    report = Report(
        "rus",
        _config_dict(args, ("alpha", "trials", "seed", "max_rounds")),
        __version__,
    )

    counts = pg.rus_round_counts(args.alpha, args.trials, args.seed, args.max_rounds)
    mean = float(counts.mean())
    for k in range(1, int(counts.max()) + 1):
        sessions = int(np.sum(counts == k))
        if sessions:
            report.results.append(
                {
                    "rounds": k,
                    "sessions": sessions,
                    "frequency": sessions / args.trials,
                    "expected": 2.0 ** (-k),
                }
            )

    sigma = float(np.sqrt(2.0 / args.trials))
    report.add_check("mean_consumption_within_3_sigma", within_three_sigma(mean, 2.0, sigma), mean, 2.0, 3 * sigma)

    observed, probs = geometric_tail_bins(counts, 10)
    chi2 = chi2_statistic(observed, probs, args.trials)
    report.add_check("geometric_fit_chi2", chi2 <= CHI2_3SIGMA[9], chi2, None, CHI2_3SIGMA[9])
    return _finish(report, args)


def cmd_remote(args) -> int:
    _require(0.0 <= args.alpha < np.pi, "--alpha must lie in [0, pi)")
    _require(args.trials >= 1, "--trials must be >= 1")
    _require(args.max_rounds >= 1, "--max-rounds must be >= 1")
    _require(
        not (args.listen and args.connect), "--listen and --connect are mutually exclusive"
    )
    report = Report(
        "remote",
        _config_dict(args, ("alpha", "trials", "seed", "max_rounds"))
        | {"listen": args.listen, "connect": args.connect},
        __version__,
    )

    if args.connect:
        host, port = _parse_addr(args.connect)
        prepared, log = rmt.run_remote_client(
            host, port, args.alpha, args.trials, args.seed, args.max_rounds
        )
        for s, n in enumerate(prepared):
            report.results.append({"session": s, "prepared": n})
        report.add_check(
            "sender_prepared_per_session",
            all(n == args.max_rounds for n in prepared),
            prepared[0] if prepared else 0,
            args.max_rounds,
        )
        report.add_check(
            "no_return_payload_frames", log.payload_count(rmt.BOB_TO_ALICE) == 0,
            log.payload_count(rmt.BOB_TO_ALICE), 0,
        )
        return _finish(report, args)

    if args.listen:
        host, port = _parse_addr(args.listen)
        server = rmt.RemoteServer(host, port)
        sys.stderr.write(f"listening on {host}:{server.port}\n")
        records, log = server.serve(args.alpha, args.trials, args.seed, args.max_rounds)
    else:
        records, log = rmt.run_sessions(args.alpha, args.trials, args.seed, args.max_rounds)

    return _finish(_remote_report(report, records, log, args), args)


def _remote_report(report: Report, records, log, args) -> Report:
    consumed = np.array([r.consumed for r in records])
    for r in records:
        report.results.append(
            {
                "session": r.session,
                "consumed": r.consumed,
                "prepared": r.prepared,
                "succeeded": r.succeeded,
                "fidelity": r.fidelity,
            }
        )
    mean = float(consumed.mean())
    sigma = float(np.sqrt(2.0 / len(records)))
    report.add_check("mean_consumed_within_3_sigma", within_three_sigma(mean, 2.0, sigma), mean, 2.0, 3 * sigma)
    worst_fid = float(min(r.fidelity for r in records))
    report.add_check("final_fidelity", worst_fid >= 1.0 - 1e-10, worst_fid, 1.0, 1e-10)
    report.add_check(
        "ledger_conservation",
        all(r.prepared == args.max_rounds for r in records),
        records[0].prepared if records else 0,
        args.max_rounds,
    )
    report.add_check(
        "no_return_payload_frames", log.payload_count(rmt.BOB_TO_ALICE) == 0,
        log.payload_count(rmt.BOB_TO_ALICE), 0,
    )
    report.add_check("all_sessions_succeeded", all(r.succeeded for r in records), int(sum(r.succeeded for r in records)), len(records))
    return report


def _parse_addr(addr: str):
    host, sep, port = addr.rpartition(":")
    _require(bool(sep) and port.isdigit(), f"address must look like HOST:PORT, got {addr!r}")
    _require(host != "", f"address must name a host, got {addr!r}")
    return host, int(port)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: validate, aggregate, run, schedules, defer,
check-faithful, transpose-path. Results go to stdout as JSON; diagnostics go
to stderr as JSON lines. Exit codes: 0 success, 1 semantic failure, 2 usage."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import deferral, semantics, serialize
from .circuit import CircuitError, validate_circuit
from .linalg import DensityOperator
from .scheduling import ScheduleError, enumerate_linear_schedules, greedy_schedule
from .semantics import SemanticsError


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def _diag_lines(diags) -> None:
    for d in diags:
        sys.stderr.write(json.dumps(d.to_json()) + "\n")


def _error(code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"severity": "error", "code": code, "message": message}) + "\n")
    return 1


def _load_circuit(path: str):
    return serialize.parse_circuit(Path(path).read_text())


def _load_state(path: str) -> DensityOperator:
    return serialize.state_from_json(json.loads(Path(path).read_text()), path)


def cmd_validate(args) -> int:
    try:
        _load_circuit(args.circuit)
    except serialize.ParseError as e:
        _diag_lines(e.diagnostics)
        return 1
    _emit({"ok": True})
    return 0


def cmd_aggregate(args) -> int:
    c = _load_circuit(args.circuit)
    rho = _load_state(args.input) if args.input else None
    agg = semantics.aggregate_measurement(c)
    tracks = []
    for f in sorted(agg.operators, key=lambda t: t.outcomes):
        entry = {
            "outcomes": f.as_dict(),
            "operator": serialize.matrix_to_json(agg.operators[f]),
        }
        if rho is not None:
            entry["probability_on"] = semantics.track_probability(c, f, rho)
        tracks.append(entry)
    _emit({"tracks": tracks})
    return 0


def _schedule_for(c, spec: str):
    if spec == "greedy":
        return greedy_schedule(c)
    return serialize.schedule_from_json(json.loads(Path(spec).read_text()))


def cmd_run(args) -> int:
    c = _load_circuit(args.circuit)
    rho = _load_state(args.input)
    x = _schedule_for(c, args.schedule)
    from .scheduling import validate_schedule

    if not validate_schedule(c, x):
        return _error("invalid-schedule", "schedule does not fit the circuit")
    if args.shots is None:
        result = semantics.run(c, x, rho, args.seed)
        raw = result.final_state.matrix
        _emit(
            {
                "track": result.track.as_dict(),
                "final_state_raw": serialize.matrix_to_json(raw),
                "final_state_normalized": serialize.matrix_to_json(
                    raw / np.trace(raw).real
                ),
                "steps": [
                    {"bout": list(b), "outcomes": list(o), "probability": p}
                    for b, o, p in result.step_log
                ],
            }
        )
        return 0
    counts: dict[tuple, int] = {}
    root = np.random.SeedSequence(args.seed)
    shot_seeds = root.generate_state(args.shots, dtype=np.uint64)
    for i in range(args.shots):
        result = semantics.run(c, x, rho, int(shot_seeds[i]))
        counts[result.track.outcomes] = counts.get(result.track.outcomes, 0) + 1
    _emit(
        {
            "shots": args.shots,
            "frequencies": [
                {"outcomes": dict(track), "count": n, "frequency": n / args.shots}
                for track, n in sorted(counts.items())
            ],
        }
    )
    return 0


def cmd_schedules(args) -> int:
    c = _load_circuit(args.circuit)
    if args.enumerate:
        scheds = enumerate_linear_schedules(c, limit=args.limit)
    else:
        scheds = [greedy_schedule(c)]
    _emit({"schedules": [serialize.schedule_to_json(x, c) for x in scheds]})
    return 0


def cmd_defer(args) -> int:
    c = _load_circuit(args.circuit)
    try:
        result = deferral.defer_measurements(c)
    except deferral.ConstraintError as e:
        return _error(
            "classically-controlled-measurement",
            f"cannot defer: {', '.join(e.gate_ids)}",
        )
    Path(args.output).write_text(serialize.serialize_circuit(result.circuit))
    sidecar = result.zeta.to_json()
    sidecar["ancillas"] = sorted(result.ancilla_registers)
    zeta_path = args.zeta or _default_zeta_path(args.output)
    Path(zeta_path).write_text(json.dumps(sidecar, indent=2) + "\n")
    _emit(
        {
            "output": args.output,
            "zeta": zeta_path,
            "ancillas": sorted(result.ancilla_registers),
            "red_gates": sorted(deferral.red_gates(result.circuit)),
        }
    )
    return 0


def _default_zeta_path(output: str) -> str:
    if output.endswith(".json"):
        return output[: -len(".json")] + ".zeta.json"
    return output + ".zeta.json"


def _parse_inputs(spec: str, n: int, seed: int):
    if spec == "basis":
        return deferral.basis_inputs(n)
    if spec.startswith("random:"):
        return deferral.random_pure_inputs(n, int(spec.split(":", 1)[1]), seed)
    raise ValueError(f"unknown inputs spec {spec!r} (use basis or random:K)")


def cmd_check_faithful(args) -> int:
    c = _load_circuit(args.source)
    d = _load_circuit(args.target)
    zeta = deferral.Commensuration.from_json(json.loads(Path(args.zeta).read_text()))
    inputs = _parse_inputs(args.inputs, c.n_registers, args.seed)
    report = deferral.check_faithful(c, d, zeta, inputs, tol=args.tol)
    _emit(report.to_json())
    return 0 if report.ok else 1


def cmd_transpose_path(args) -> int:
    from .scheduling import transposition_path

    p = serialize.poset_from_json(json.loads(Path(args.poset).read_text()))
    frm = json.loads(Path(args.frm).read_text())
    to = json.loads(Path(args.to).read_text())
    path = transposition_path(p, frm, to)
    _emit({"steps": len(path) - 1, "orders": [list(o) for o in path]})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qcirc")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a circuit file")
    p.add_argument("circuit")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("aggregate", help="compute the aggregate measurement")
    p.add_argument("circuit")
    p.add_argument("--input", help="state file; adds per-track probabilities")
    p.set_defaults(fn=cmd_aggregate)

    p = sub.add_parser("run", help="execute the circuit stochastically")
    p.add_argument("circuit")
    p.add_argument("--input", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--shots", type=int)
    p.add_argument("--schedule", default="greedy", help="greedy or a schedule file")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("schedules", help="emit schedules of a circuit")
    p.add_argument("circuit")
    p.add_argument("--enumerate", action="store_true", help="all linear schedules")
    p.add_argument("--limit", type=int, default=1000)
    p.set_defaults(fn=cmd_schedules)

    p = sub.add_parser("defer", help="run the measurement-deferral pass")
    p.add_argument("circuit")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--zeta", help="sidecar path (default: <output>.zeta.json)")
    p.set_defaults(fn=cmd_defer)

    p = sub.add_parser("check-faithful", help="verify faithful simulation")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--zeta", required=True)
    p.add_argument("--inputs", default="basis", help="basis or random:K")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_check_faithful)

    p = sub.add_parser("transpose-path", help="coherent adjacent-transposition path")
    p.add_argument("poset")
    p.add_argument("--from", dest="frm", required=True)
    p.add_argument("--to", required=True)
    p.set_defaults(fn=cmd_transpose_path)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except serialize.ParseError as e:
        _diag_lines(e.diagnostics)
        return 1
    except (CircuitError, ScheduleError, SemanticsError, deferral.DeferralError) as e:
        return _error("semantic-error", str(e))
    except (OSError, json.JSONDecodeError, ValueError) as e:
        return _error("io-error", str(e))


if __name__ == "__main__":
    sys.exit(main())

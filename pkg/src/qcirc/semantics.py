"""Denotational and operational semantics: tracks, cumulative operators, the
aggregate measurement, schedule equivalence, and a seeded stochastic executor.

Post-measurement states are kept un-normalized; normalization happens only
when sampling or reporting.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from . import linalg
from .circuit import (
    CircuitError,
    Gate,
    Measurement,
    QuantumCircuit,
    UnitaryOp,
    topo_order,
)
from .scheduling import Bout, Schedule, greedy_schedule

TOL = linalg.DEFAULT_TOL
DEFAULT_TRACK_CAP = 2**16


class SemanticsError(ValueError):
    pass


@dataclass(frozen=True)
class Track:
    """Coherent assignment of an outcome label to every measurement gate,
    stored as (gate id, label) pairs sorted by gate id."""

    outcomes: tuple[tuple[str, str], ...]

    @classmethod
    def from_mapping(cls, assignment: Mapping[str, str]) -> "Track":
        return cls(tuple(sorted(assignment.items())))

    def as_dict(self) -> dict[str, str]:
        return dict(self.outcomes)

    def get(self, gid: str) -> str:
        for g, label in self.outcomes:
            if g == gid:
                return label
        raise KeyError(gid)


@dataclass(frozen=True, eq=False)
class AggregateMeasurement:
    """The circuit's denotation: track -> cumulative operator."""

    n_qubits: int
    operators: dict  # Track -> np.ndarray

    def completeness_defect(self) -> float:
        dim = 2**self.n_qubits
        acc = np.zeros((dim, dim), dtype=complex)
        for op in self.operators.values():
            acc += op.conj().T @ op
        return float(np.max(np.abs(acc - np.eye(dim))))


@dataclass(frozen=True, eq=False)
class RunResult:
    track: Track
    final_state: linalg.DensityOperator
    step_log: tuple  # ((gate ids...), (outcome labels...), probability)


def source_outcomes(g: Gate, assignment: Mapping[str, str]) -> tuple[str, ...]:
    try:
        return tuple(assignment[s] for s in g.classical_sources)
    except KeyError as e:
        raise SemanticsError(
            f"gate {g.id!r}: no outcome recorded for classical source {e.args[0]!r}"
        ) from None


def select_measurement(
    c: QuantumCircuit, gid: str, sources: tuple[str, ...]
) -> Union[Measurement, UnitaryOp]:
    """The measurement or unitary picked by the gate's selector for the given
    source outcomes."""
    g = c.gate(gid)
    if len(sources) != len(g.classical_sources):
        raise SemanticsError(
            f"gate {gid!r}: expected {len(g.classical_sources)} source outcomes, got {len(sources)}"
        )
    try:
        target = g.selector[tuple(sources)]
    except KeyError:
        raise SemanticsError(f"gate {gid!r}: selector has no entry for {sources}") from None
    if g.is_measure:
        return g.measurements[target]
    return g.unitaries[target]


def _selected_operator(c: QuantumCircuit, gid: str, assignment: Mapping[str, str]) -> np.ndarray:
    g = c.gate(gid)
    chosen = select_measurement(c, gid, source_outcomes(g, assignment))
    if isinstance(chosen, UnitaryOp):
        return chosen.matrix
    label = assignment.get(gid)
    if label is None or label not in chosen.operators:
        raise SemanticsError(
            f"track is incoherent at gate {gid!r}: outcome {label!r} not offered "
            f"by the selected measurement"
        )
    return chosen.operators[label]


def bout_operator(
    c: QuantumCircuit, b: Iterable[str], assignment: Mapping[str, str]
) -> np.ndarray:
    """Full-space operator of a bout under the given outcome assignment:
    the embedded tensor product of each gate's selected operator."""
    n = c.n_registers
    out = np.eye(2**n, dtype=complex)
    for gid in sorted(b, key=c.index_of):
        g = c.gate(gid)
        op = _selected_operator(c, gid, assignment)
        out = linalg.embed(op, g.registers, n) @ out
    return out


def enumerate_tracks(c: QuantumCircuit, cap: Optional[int] = DEFAULT_TRACK_CAP) -> list[Track]:
    """All coherent tracks, depth-first in topological gate order with
    lexicographic outcome order."""
    order = topo_order(c)
    out: list[Track] = []
    assignment: dict[str, str] = {}

    def rec(i: int) -> None:
        if cap is not None and len(out) > cap:
            return
        if i == len(order):
            out.append(Track.from_mapping(assignment))
            return
        gid = order[i]
        g = c.gate(gid)
        chosen = select_measurement(c, gid, source_outcomes(g, assignment))
        if isinstance(chosen, UnitaryOp):
            rec(i + 1)
            return
        for label in sorted(chosen.operators):
            assignment[gid] = label
            rec(i + 1)
            del assignment[gid]

    rec(0)
    if cap is not None and len(out) > cap:
        raise SemanticsError(f"track count exceeds cap {cap}")
    return out


def cumulative_operator(c: QuantumCircuit, x: Schedule, f: Track) -> np.ndarray:
    assignment = f.as_dict()
    out = np.eye(2**c.n_registers, dtype=complex)
    for bout in x.bouts:
        out = bout_operator(c, bout, assignment) @ out
    return out


def aggregate_measurement(
    c: QuantumCircuit, cap: Optional[int] = DEFAULT_TRACK_CAP
) -> AggregateMeasurement:
    x = greedy_schedule(c)
    ops = {f: cumulative_operator(c, x, f) for f in enumerate_tracks(c, cap)}
    return AggregateMeasurement(c.n_registers, ops)


def schedules_equivalent(
    c: QuantumCircuit, x: Schedule, y: Schedule, tol: float = TOL
) -> bool:
    for f in enumerate_tracks(c):
        if not linalg.mat_close(
            cumulative_operator(c, x, f), cumulative_operator(c, y, f), tol
        ):
            return False
    return True


def track_probability(c: QuantumCircuit, f: Track, rho: linalg.DensityOperator) -> float:
    if rho.n_qubits != c.n_registers:
        raise SemanticsError(
            f"state has {rho.n_qubits} qubits, circuit has {c.n_registers} registers"
        )
    op = cumulative_operator(c, greedy_schedule(c), f)
    p = linalg.trace(op @ rho.matrix @ op.conj().T).real / linalg.trace(rho.matrix).real
    return float(min(max(p, 0.0), 1.0))


def replay(
    c: QuantumCircuit, x: Schedule, f: Track, rho: linalg.DensityOperator
) -> tuple[list[float], np.ndarray]:
    """Deterministically walk a schedule along a fixed track, returning the
    stepwise conditional probabilities and the un-normalized final state."""
    assignment = f.as_dict()
    sigma = rho.matrix
    probs: list[float] = []
    for bout in x.bouts:
        tr_before = linalg.trace(sigma).real
        a = bout_operator(c, bout, assignment)
        sigma = a @ sigma @ a.conj().T
        probs.append(linalg.trace(sigma).real / tr_before)
    return probs, sigma


def _bout_outcome_choices(
    c: QuantumCircuit, bout: Iterable[str], assignment: Mapping[str, str]
) -> tuple[list[str], list[list[str]]]:
    """Measurement gates of the bout (in sequence order) and, per gate, its
    selectable outcome labels under the current assignment."""
    gids = [gid for gid in sorted(bout, key=c.index_of) if c.gate(gid).is_measure]
    choices = []
    for gid in gids:
        g = c.gate(gid)
        chosen = select_measurement(c, gid, source_outcomes(g, assignment))
        choices.append(sorted(chosen.operators))
    return gids, choices


def run(
    c: QuantumCircuit, x: Schedule, rho: linalg.DensityOperator, seed: int
) -> RunResult:
    """Fire the schedule's bouts in order, sampling measurement outcomes with
    their conditional probabilities. Deterministic for a fixed seed; bout t
    draws from the substream seeded by (seed, t)."""
    if rho.n_qubits != c.n_registers:
        raise SemanticsError(
            f"state has {rho.n_qubits} qubits, circuit has {c.n_registers} registers"
        )
    sigma = rho.matrix
    assignment: dict[str, str] = {}
    log = []
    for t, bout in enumerate(x.bouts):
        tr_before = linalg.trace(sigma).real
        if tr_before <= 1e-300:
            raise SemanticsError(f"zero-trace state before bout {t}")
        gids, choices = _bout_outcome_choices(c, bout, assignment)
        combos = list(itertools.product(*choices)) if gids else [()]
        weights = []
        states = []
        for combo in combos:
            trial = dict(assignment)
            trial.update(zip(gids, combo))
            a = bout_operator(c, bout, trial)
            s = a @ sigma @ a.conj().T
            states.append(s)
            weights.append(max(linalg.trace(s).real / tr_before, 0.0))
        total = sum(weights)
        if total <= 0.0:
            raise SemanticsError(f"all outcomes of bout {t} have zero probability")
        rng = np.random.default_rng((seed, t))
        u = rng.random() * total
        acc = 0.0
        pick = len(combos) - 1
        for i, w in enumerate(weights):
            acc += w
            if u <= acc:
                pick = i
                break
        assignment.update(zip(gids, combos[pick]))
        sigma = states[pick]
        log.append((tuple(sorted(bout, key=c.index_of)), combos[pick], weights[pick]))
    if linalg.trace(sigma).real <= 1e-300:
        raise SemanticsError("final state has zero trace")
    return RunResult(
        Track.from_mapping(assignment),
        linalg.DensityOperator(c.n_registers, sigma),
        tuple(log),
    )

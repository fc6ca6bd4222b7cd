"""Circuit data model: gates with measurement families, classical channels,
register wiring, validation, stages, and truncation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from . import linalg

TOL = linalg.DEFAULT_TOL


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    where: str  # gate id or location
    message: str

    def to_json(self) -> dict:
        return {
            "severity": self.severity,
            "code": self.code,
            "where": self.where,
            "message": self.message,
        }


@dataclass(frozen=True, eq=False)
class Measurement:
    """Indexed family of operators {A_i} with sum A_i^dag A_i = I."""

    id: str
    operators: Mapping[str, np.ndarray]

    @property
    def outcomes(self) -> tuple[str, ...]:
        return tuple(sorted(self.operators))

    def completeness_defect(self) -> float:
        ops = list(self.operators.values())
        dim = ops[0].shape[1]
        acc = sum(a.conj().T @ a for a in ops)
        return float(np.max(np.abs(acc - np.eye(dim))))


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    id: str
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class Gate:
    """One circuit gate.

    Exactly one of `unitaries` / `measurements` is non-empty; `selector` maps
    tuples of source outcome labels (one per classical source, in order) to an
    op or measurement id. Non-CC gates carry the empty-tuple selector.
    """

    id: str
    registers: tuple[int, ...]
    unitaries: Mapping[str, UnitaryOp] = field(default_factory=dict)
    measurements: Mapping[str, Measurement] = field(default_factory=dict)
    classical_sources: tuple[str, ...] = ()
    selector: Mapping[tuple[str, ...], str] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "measure" if self.measurements else "unitary"

    @property
    def is_measure(self) -> bool:
        return bool(self.measurements)

    @property
    def arity(self) -> int:
        return len(self.registers)

    @property
    def outcome_labels(self) -> tuple[str, ...]:
        """All G-outcomes, across every measurement of the gate."""
        labels = []
        for m in self.measurements.values():
            labels.extend(m.operators)
        return tuple(sorted(labels))


def unitary_gate(gid: str, registers: Iterable[int], matrix: np.ndarray) -> Gate:
    op = UnitaryOp(gid, np.asarray(matrix, dtype=complex))
    return Gate(gid, tuple(registers), unitaries={gid: op}, selector={(): gid})


def measure_gate(
    gid: str, registers: Iterable[int], operators: Mapping[str, np.ndarray]
) -> Gate:
    m = Measurement(gid, {k: np.asarray(v, dtype=complex) for k, v in operators.items()})
    return Gate(gid, tuple(registers), measurements={gid: m}, selector={(): gid})


def standard_measure_gate(gid: str, register: int) -> Gate:
    p0 = np.array([[1, 0], [0, 0]], dtype=complex)
    p1 = np.array([[0, 0], [0, 1]], dtype=complex)
    return measure_gate(gid, [register], {"0": p0, "1": p1})


def controlled_unitary_gate(
    gid: str,
    registers: Iterable[int],
    sources: Iterable[str],
    ops: Mapping[str, np.ndarray],
    selector: Mapping[tuple[str, ...], str],
) -> Gate:
    return Gate(
        gid,
        tuple(registers),
        unitaries={k: UnitaryOp(k, np.asarray(v, dtype=complex)) for k, v in ops.items()},
        classical_sources=tuple(sources),
        selector=dict(selector),
    )


@dataclass(frozen=True, eq=False)
class QuantumCircuit:
    register_names: tuple[str, ...]
    gates: tuple[Gate, ...]

    @property
    def n_registers(self) -> int:
        return len(self.register_names)

    def gate(self, gid: str) -> Gate:
        try:
            return self._by_id[gid]
        except KeyError:
            raise CircuitError(f"unknown gate id {gid!r}") from None

    def has_gate(self, gid: str) -> bool:
        return gid in self._by_id

    def index_of(self, gid: str) -> int:
        self.gate(gid)
        return self._index[gid]

    @property
    def _by_id(self) -> dict[str, Gate]:
        cache = self.__dict__.get("_by_id_cache")
        if cache is None:
            cache = {g.id: g for g in self.gates}
            self.__dict__["_by_id_cache"] = cache
        return cache

    @property
    def _index(self) -> dict[str, int]:
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {g.id: i for i, g in enumerate(self.gates)}
            self.__dict__["_index_cache"] = cache
        return cache

    def register_chain(self, r: int) -> list[str]:
        """Gate ids touching register r, in sequence order."""
        return [g.id for g in self.gates if r in g.registers]

    def quantum_sources(self, gid: str) -> dict[int, Optional[str]]:
        """Per register of the gate: the previous producer on that register
        (a gate id, or None for the circuit input)."""
        g = self.gate(gid)
        out: dict[int, Optional[str]] = {}
        for r in g.registers:
            chain = self.register_chain(r)
            pos = chain.index(gid)
            out[r] = chain[pos - 1] if pos > 0 else None
        return out

    def direct_sources(self, gid: str) -> set[str]:
        """Gates G' with G' < G in the source relation (quantum or classical)."""
        g = self.gate(gid)
        srcs = {s for s in self.quantum_sources(gid).values() if s is not None}
        srcs.update(s for s in g.classical_sources if self.has_gate(s))
        return srcs

    def edges(self) -> set[tuple[str, str]]:
        out = set()
        for g in self.gates:
            for s in self.direct_sources(g.id):
                out.add((s, g.id))
        return out


def _toposort(nodes: list[str], edges: set[tuple[str, str]], key) -> Optional[list[str]]:
    """Kahn's algorithm with a priority tie-break; None if cyclic."""
    import heapq

    succ: dict[str, list[str]] = {v: [] for v in nodes}
    indeg = {v: 0 for v in nodes}
    for a, b in edges:
        succ[a].append(b)
        indeg[b] += 1
    heap = [(key(v), v) for v in nodes if indeg[v] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        _, v = heapq.heappop(heap)
        out.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, (key(w), w))
    return out if len(out) == len(nodes) else None


def topo_order(c: QuantumCircuit) -> list[str]:
    """Gate ids in a topological order of the source relation, stable with
    respect to the circuit's gate sequence."""
    nodes = [g.id for g in c.gates]
    order = _toposort(nodes, c.edges(), key=lambda v: c.index_of(v))
    if order is None:
        raise CircuitError("source relation is cyclic")
    return order


def prerequisites(c: QuantumCircuit, gid: str) -> set[str]:
    """Transitive closure of the source relation below the gate."""
    c.gate(gid)
    seen: set[str] = set()
    stack = list(c.direct_sources(gid))
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        stack.extend(c.direct_sources(v) - seen)
    return seen


def validate_circuit(c: QuantumCircuit) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def err(code: str, where: str, message: str) -> None:
        diags.append(Diagnostic("error", code, where, message))

    seen_ids: set[str] = set()
    for g in c.gates:
        if g.id in seen_ids:
            err("duplicate-gate-id", g.id, f"gate id {g.id!r} appears more than once")
        seen_ids.add(g.id)

    for g in c.gates:
        if not g.registers:
            err("empty-registers", g.id, "gate touches no register")
        if len(set(g.registers)) != len(g.registers):
            err("duplicate-register", g.id, f"registers {g.registers} repeat")
        for r in g.registers:
            if r < 0 or r >= c.n_registers:
                err("register-out-of-range", g.id, f"register {r} out of range")
        if bool(g.unitaries) == bool(g.measurements):
            err("bad-gate-kind", g.id, "gate must carry unitaries xor measurements")
            continue

        dim = 2**g.arity
        labels_seen: set[str] = set()
        for m in g.measurements.values():
            if not m.operators:
                err("empty-measurement", g.id, f"measurement {m.id!r} has no outcome")
                continue
            bad_dims = False
            for label, a in m.operators.items():
                if label == "" or "," in label:
                    err("bad-label", g.id, f"outcome label {label!r} is reserved")
                if label in labels_seen:
                    err(
                        "outcome-labels-overlap",
                        g.id,
                        f"outcome label {label!r} appears in two measurements",
                    )
                labels_seen.add(label)
                if a.shape != (dim, dim):
                    err(
                        "operator-dim-mismatch",
                        g.id,
                        f"operator for outcome {label!r} has shape {a.shape}, expected {dim}x{dim}",
                    )
                    bad_dims = True
            if not bad_dims and m.completeness_defect() > TOL:
                err(
                    "measurement-incomplete",
                    g.id,
                    f"sum A^dag A differs from identity by {m.completeness_defect():.2e}",
                )
        for u in g.unitaries.values():
            if u.matrix.shape != (dim, dim):
                err(
                    "operator-dim-mismatch",
                    g.id,
                    f"unitary {u.id!r} has shape {u.matrix.shape}, expected {dim}x{dim}",
                )
            elif not linalg.is_unitary(u.matrix, TOL):
                err("non-unitary-op", g.id, f"operator {u.id!r} is not unitary")

        # classical sources and selector totality
        source_outcome_sets: list[tuple[str, ...]] = []
        sources_ok = True
        for s in g.classical_sources:
            if not c.has_gate(s):
                err("unknown-classical-source", g.id, f"classical source {s!r} not found")
                sources_ok = False
                continue
            src = c.gate(s)
            if not src.is_measure:
                err(
                    "classical-source-not-measure",
                    g.id,
                    f"classical source {s!r} is not a measurement gate",
                )
                sources_ok = False
                continue
            source_outcome_sets.append(src.outcome_labels)
        if not g.classical_sources:
            choices = dict(g.unitaries) or dict(g.measurements)
            if len(choices) != 1:
                err(
                    "non-cc-multiple-ops",
                    g.id,
                    f"gate without classical sources must carry exactly one op, has {len(choices)}",
                )
            if set(g.selector) != {()}:
                err("selector-not-total", g.id, "non-CC gate needs the empty-tuple selector")
        elif sources_ok:
            expected = set(itertools.product(*source_outcome_sets))
            got = set(g.selector)
            if got != expected:
                missing = sorted(expected - got)[:3]
                extra = sorted(got - expected)[:3]
                err(
                    "selector-not-total",
                    g.id,
                    f"selector domain mismatch (missing {missing}, extra {extra})",
                )
        valid_targets = set(g.unitaries) | set(g.measurements)
        for key, target in g.selector.items():
            if target not in valid_targets:
                err("selector-unknown-target", g.id, f"selector {key} -> unknown id {target!r}")

    if not diags:
        nodes = [g.id for g in c.gates]
        if _toposort(nodes, c.edges(), key=lambda v: c.index_of(v)) is None:
            err("cycle", "<circuit>", "combined source relation is cyclic")
    return diags


def check_valid(c: QuantumCircuit) -> QuantumCircuit:
    diags = validate_circuit(c)
    if diags:
        raise CircuitError("; ".join(f"{d.code}@{d.where}: {d.message}" for d in diags))
    return c


# --- stages ----------------------------------------------------------------


def is_stage(c: QuantumCircuit, s: Iterable[str]) -> bool:
    s = set(s)
    for gid in s:
        c.gate(gid)
    return all(prerequisites(c, gid) <= s for gid in s)


def ready_gates(c: QuantumCircuit, s: Iterable[str]) -> set[str]:
    s = set(s)
    return {
        g.id
        for g in c.gates
        if g.id not in s and prerequisites(c, g.id) <= s
    }


def stage_exits(c: QuantumCircuit, s: Iterable[str]) -> set[tuple[int, Optional[str]]]:
    """One exit per register: (register, last producer within the stage),
    where the producer is a gate id or None for the circuit input."""
    s = set(s)
    if not is_stage(c, s):
        raise CircuitError("gate set is not a stage")
    exits: set[tuple[int, Optional[str]]] = set()
    for r in range(c.n_registers):
        producer: Optional[str] = None
        for gid in c.register_chain(r):
            if gid in s:
                producer = gid
        exits.add((r, producer))
    assert len(exits) == c.n_registers
    return exits


def truncate(c: QuantumCircuit, s: Iterable[str]) -> QuantumCircuit:
    s = set(s)
    if not is_stage(c, s):
        raise CircuitError("gate set is not a stage")
    return QuantumCircuit(c.register_names, tuple(g for g in c.gates if g.id in s))

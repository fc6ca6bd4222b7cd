"""Schedules (sequences of gate bouts) and coherent linear orders on posets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .circuit import CircuitError, QuantumCircuit, is_stage, prerequisites, ready_gates

Bout = frozenset  # frozenset[str]


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    bouts: tuple[Bout, ...]

    def __iter__(self):
        return iter(self.bouts)

    def __len__(self):
        return len(self.bouts)

    def gate_ids(self) -> set[str]:
        out: set[str] = set()
        for b in self.bouts:
            out |= b
        return out


def is_antichain(c: QuantumCircuit, gates: Iterable[str]) -> bool:
    gates = set(gates)
    return all(not (prerequisites(c, g) & gates) for g in gates)


def validate_schedule(c: QuantumCircuit, x: Schedule) -> bool:
    """True iff every prefix-union is a stage, each bout is a nonempty
    antichain of gates ready at the preceding stage, and the union is total."""
    fired: set[str] = set()
    for bout in x.bouts:
        if not bout:
            return False
        for gid in bout:
            c.gate(gid)
        if bout & fired:
            return False
        ready = ready_gates(c, fired)
        if not bout <= ready:
            return False
        fired |= bout
        if not is_stage(c, fired):
            return False
    return fired == {g.id for g in c.gates}


def greedy_schedule(c: QuantumCircuit) -> Schedule:
    """Canonical schedule: each bout fires every ready gate."""
    fired: set[str] = set()
    bouts: list[Bout] = []
    total = {g.id for g in c.gates}
    while fired != total:
        ready = ready_gates(c, fired)
        if not ready:
            raise CircuitError("no ready gates; source relation is cyclic")
        bouts.append(frozenset(ready))
        fired |= ready
    return Schedule(tuple(bouts))


def linear_schedule(order: Sequence[str]) -> Schedule:
    return Schedule(tuple(frozenset([g]) for g in order))


def enumerate_linear_schedules(
    c: QuantumCircuit, limit: Optional[int] = 1000
) -> list[Schedule]:
    """All linear extensions of the prerequisite relation as singleton-bout
    schedules, depth-first with lexicographic tie-breaking on gate id."""
    total = {g.id for g in c.gates}
    out: list[Schedule] = []
    prefix: list[str] = []

    def rec() -> bool:
        if limit is not None and len(out) >= limit:
            return False
        if len(prefix) == len(total):
            out.append(linear_schedule(prefix))
            return limit is None or len(out) < limit
        for gid in sorted(ready_gates(c, prefix)):
            prefix.append(gid)
            more = rec()
            prefix.pop()
            if not more:
                return False
        return True

    rec()
    return out


def split_bout(x: Schedule, t: int, b1: Iterable[str], b2: Iterable[str]) -> Schedule:
    """Replace bout X_t by the pair (b1; b2); b1, b2 must disjointly cover it."""
    b1, b2 = frozenset(b1), frozenset(b2)
    if not (0 <= t < len(x.bouts)):
        raise ScheduleError(f"bout index {t} out of range")
    if not b1 or not b2 or (b1 & b2) or (b1 | b2) != x.bouts[t]:
        raise ScheduleError("b1, b2 must be a disjoint nonempty cover of the bout")
    return Schedule(x.bouts[:t] + (b1, b2) + x.bouts[t + 1 :])


# --- posets and coherent linear orders -------------------------------------


@dataclass(frozen=True)
class Poset:
    """Finite strict partial order, stored transitively closed."""

    elements: tuple[str, ...]
    less: frozenset  # frozenset[tuple[str, str]]

    @classmethod
    def from_pairs(
        cls, elements: Iterable[str], pairs: Iterable[tuple[str, str]]
    ) -> "Poset":
        elements = tuple(elements)
        elem_set = set(elements)
        if len(elem_set) != len(elements):
            raise ScheduleError("duplicate poset elements")
        rel = set()
        for a, b in pairs:
            if a not in elem_set or b not in elem_set:
                raise ScheduleError(f"pair ({a!r}, {b!r}) uses unknown elements")
            rel.add((a, b))
        # Warshall closure
        changed = True
        while changed:
            changed = False
            for a, b in list(rel):
                for b2, cc in list(rel):
                    if b == b2 and (a, cc) not in rel:
                        rel.add((a, cc))
                        changed = True
        for a in elements:
            if (a, a) in rel:
                raise ScheduleError("relation is not a strict partial order (cycle)")
        return cls(elements, frozenset(rel))

    def lt(self, a: str, b: str) -> bool:
        return (a, b) in self.less

    def coherent(self, order: Sequence[str]) -> bool:
        """Linear extension check: a < b in the order whenever a precedes b
        in the poset."""
        if sorted(order) != sorted(self.elements):
            return False
        pos = {e: i for i, e in enumerate(order)}
        return all(pos[a] < pos[b] for a, b in self.less)


def differentiating_pairs(frm: Sequence[str], to: Sequence[str]) -> int:
    """Number of pairs ordered one way by `frm` and the other way by `to`."""
    pos = {e: i for i, e in enumerate(to)}
    count = 0
    for i in range(len(frm)):
        for j in range(i + 1, len(frm)):
            if pos[frm[i]] > pos[frm[j]]:
                count += 1
    return count


def transposition_path(
    p: Poset, frm: Sequence[str], to: Sequence[str]
) -> list[tuple[str, ...]]:
    """Path of coherent linear orders from `frm` to `to`, each step one
    adjacent transposition; the step count equals the number of
    differentiating pairs."""
    frm, to = tuple(frm), tuple(to)
    if not p.coherent(frm):
        raise ScheduleError("`frm` is not coherent with the poset")
    if not p.coherent(to):
        raise ScheduleError("`to` is not coherent with the poset")
    pos = {e: i for i, e in enumerate(to)}
    path = [frm]
    cur = list(frm)
    while tuple(cur) != to:
        for i in range(len(cur) - 1):
            if pos[cur[i]] > pos[cur[i + 1]]:
                cur[i], cur[i + 1] = cur[i + 1], cur[i]
                path.append(tuple(cur))
                break
        else:  # pragma: no cover - impossible for coherent inputs
            raise ScheduleError("no adjacent differentiating pair found")
    return path

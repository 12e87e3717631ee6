"""Dataflow graphs for CGRA mapping.

A DFG is a directed hypergraph: vertices are operations, each hyperedge is
one driver operation fanning out to a list of (sink, operand index) pairs.
Cycles and self-loops are permitted (loop-carried dependences). Each
(sink, operand) slot is driven at most once. An operation produces a single
value, so all edge lines with the same driver denote one net and are merged.

The text format, one directive per line, '#' starts a comment:

    op <id> <opcode> [const=<int>]
    edge <driver> -> <sink>:<operand>[, <sink>:<operand> ...]
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional

ALU_OPCODES = frozenset(
    {"add", "sub", "mul", "div", "and", "or", "xor", "shl", "shr", "cmp"}
)
MEM_OPCODES = frozenset({"load", "store"})
IO_OPCODES = frozenset({"input", "output"})
CONST_OPCODE = "const"
OPCODES = ALU_OPCODES | MEM_OPCODES | IO_OPCODES | {CONST_OPCODE}

_ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class DfgError(ValueError):
    """Raised on malformed DFG text or an ill-formed graph.

    kind: one of 'syntax', 'duplicate-op', 'unknown-opcode', 'dangling',
    'duplicate-driver', 'bad-id'. line is 1-based, 0 when not tied to a line.
    """

    def __init__(self, kind: str, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.kind = kind
        self.line = line


@dataclass(frozen=True, order=True)
class Operation:
    id: str
    opcode: str
    const_value: Optional[int] = None


@dataclass(frozen=True)
class Edge:
    """One net: driver op id and its (sink op id, operand index) fanout."""

    driver: str
    sinks: tuple[tuple[str, int], ...]


class Dfg:
    """Immutable-by-convention operation/edge container with lookups."""

    def __init__(self, operations: Iterable[Operation], edges: Iterable[Edge]):
        self.operations: tuple[Operation, ...] = tuple(
            sorted(operations, key=lambda o: o.id)
        )
        self.ops_by_id: dict[str, Operation] = {}
        for op in self.operations:
            if op.id in self.ops_by_id:
                raise DfgError("duplicate-op", f"operation '{op.id}' defined twice")
            self.ops_by_id[op.id] = op
        merged: dict[str, list[tuple[str, int]]] = {}
        for e in edges:
            merged.setdefault(e.driver, []).extend(e.sinks)
        self.edges: tuple[Edge, ...] = tuple(
            Edge(d, tuple(sorted(set(sk)))) for d, sk in sorted(merged.items())
        )
        seen_slots: dict[tuple[str, int], str] = {}
        for e in self.edges:
            if e.driver not in self.ops_by_id:
                raise DfgError("dangling", f"edge driver '{e.driver}' is not an op")
            for sink, idx in e.sinks:
                if sink not in self.ops_by_id:
                    raise DfgError("dangling", f"edge sink '{sink}' is not an op")
                if (sink, idx) in seen_slots:
                    raise DfgError(
                        "duplicate-driver",
                        f"operand {sink}:{idx} driven by both "
                        f"'{seen_slots[(sink, idx)]}' and '{e.driver}'",
                    )
                seen_slots[(sink, idx)] = e.driver

    def fanout(self, op_id: str) -> tuple[tuple[str, int], ...]:
        for e in self.edges:
            if e.driver == op_id:
                return e.sinks
        return ()

    def point_edges(self) -> tuple[tuple[str, str], ...]:
        """Deduplicated (driver, sink) pairs, hyperedges flattened."""
        pairs = set()
        for e in self.edges:
            for sink, _idx in e.sinks:
                pairs.add((e.driver, sink))
        return tuple(sorted(pairs))

    def __eq__(self, other):
        return (
            isinstance(other, Dfg)
            and self.operations == other.operations
            and self.edges == other.edges
        )

    def __hash__(self):
        return hash((self.operations, self.edges))

    def __repr__(self):
        return f"Dfg({len(self.operations)} ops, {len(self.edges)} edges)"


def parse_dfg(text: str) -> Dfg:
    """Parse the text format. Raises DfgError with a 1-based line number."""
    ops: list[Operation] = []
    seen_ids: set[str] = set()
    edges: list[Edge] = []
    edge_lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split(None, 1)
        if fields[0] == "op":
            rest = fields[1].split() if len(fields) > 1 else []
            if len(rest) < 2:
                raise DfgError("syntax", "expected: op <id> <opcode>", lineno)
            op_id, opcode = rest[0], rest[1]
            if not _ID_RE.match(op_id):
                raise DfgError("bad-id", f"bad op id '{op_id}'", lineno)
            if opcode not in OPCODES:
                raise DfgError("unknown-opcode", f"unknown opcode '{opcode}'", lineno)
            const_value = None
            for extra in rest[2:]:
                if extra.startswith("const="):
                    try:
                        const_value = int(extra[len("const=") :])
                    except ValueError:
                        raise DfgError("syntax", f"bad const payload '{extra}'", lineno)
                else:
                    raise DfgError("syntax", f"unexpected token '{extra}'", lineno)
            if op_id in seen_ids:
                raise DfgError("duplicate-op", f"operation '{op_id}' defined twice", lineno)
            seen_ids.add(op_id)
            ops.append(Operation(op_id, opcode, const_value))
        elif fields[0] == "edge":
            m = re.match(r"^(\S+)\s*->\s*(.+)$", fields[1] if len(fields) > 1 else "")
            if not m:
                raise DfgError("syntax", "expected: edge <driver> -> <sink>:<idx>,...", lineno)
            driver = m.group(1)
            sinks = []
            for part in m.group(2).split(","):
                part = part.strip()
                sm = re.match(r"^(\S+):(\d+)$", part)
                if not sm:
                    raise DfgError("syntax", f"bad sink '{part}', expected <sink>:<idx>", lineno)
                sinks.append((sm.group(1), int(sm.group(2))))
            edges.append(Edge(driver, tuple(sinks)))
            edge_lines.append(lineno)
        else:
            raise DfgError("syntax", f"unknown directive '{fields[0]}'", lineno)
    slot_owner: dict[tuple[str, int], str] = {}
    for e, lineno in zip(edges, edge_lines):
        if e.driver not in seen_ids:
            raise DfgError("dangling", f"edge driver '{e.driver}' is not an op", lineno)
        for sink, idx in e.sinks:
            if sink not in seen_ids:
                raise DfgError("dangling", f"edge sink '{sink}' is not an op", lineno)
            if (sink, idx) in slot_owner and slot_owner[(sink, idx)] != e.driver:
                raise DfgError(
                    "duplicate-driver",
                    f"operand {sink}:{idx} driven by both "
                    f"'{slot_owner[(sink, idx)]}' and '{e.driver}'",
                    lineno,
                )
            slot_owner[(sink, idx)] = e.driver
    return Dfg(ops, edges)


def serialize_dfg(dfg: Dfg) -> str:
    """Canonical text form: ops sorted by id, one merged edge per driver."""
    out = []
    for op in dfg.operations:
        line = f"op {op.id} {op.opcode}"
        if op.const_value is not None:
            line += f" const={op.const_value}"
        out.append(line)
    for e in dfg.edges:
        sinks = ", ".join(f"{s}:{i}" for s, i in e.sinks)
        out.append(f"edge {e.driver} -> {sinks}")
    return "\n".join(out) + "\n"


def validate_dfg(dfg: Dfg) -> list[str]:
    """Return a list of violation strings, empty when well-formed.

    Construction already rejects hard errors; this reports semantic lint:
    unknown opcodes, const payload on non-const ops, ops with no route to
    any sink (dead), operand slots of arity-positive opcodes left undriven
    are NOT flagged (arity is not declared in the format).
    """
    issues = []
    for op in dfg.operations:
        if op.opcode not in OPCODES:
            issues.append(f"op {op.id}: unknown opcode '{op.opcode}'")
        if op.const_value is not None and op.opcode != CONST_OPCODE:
            issues.append(f"op {op.id}: const payload on opcode '{op.opcode}'")
        if op.opcode == CONST_OPCODE and op.const_value is None:
            issues.append(f"op {op.id}: const op without const= payload")
    drives = {e.driver for e in dfg.edges}
    has_fanin = {s for e in dfg.edges for s, _ in e.sinks}
    for op in dfg.operations:
        if op.opcode == "output" and op.id in drives:
            issues.append(f"op {op.id}: output op drives an edge")
        if op.opcode in ("input", CONST_OPCODE) and op.id in has_fanin:
            issues.append(f"op {op.id}: source op has fanin")
    return issues


def _sccs(vertex_ids: list[str], succ: dict[str, set[str]]) -> list[list[str]]:
    """Tarjan SCCs, iterative. Returns components in reverse topological
    order of the condensation (sink components first)."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    comps: list[list[str]] = []
    counter = [0]

    for root in vertex_ids:
        if root in index:
            continue
        work = [(root, iter(sorted(succ.get(root, ()))))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(succ.get(w, ())))))
                    advanced = True
                    break
                elif w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                pv = work[-1][0]
                low[pv] = min(low[pv], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def cover_set(dfg: Dfg) -> frozenset[str]:
    """Ops whose combined fanin cones cover the whole graph.

    Sink operations (no fanout), augmented with the lowest-id vertex of each
    strongly connected component that has no edge leaving it (pure cycles
    never reach a sink otherwise). Equivalently: one representative per sink
    component of the condensation.
    """
    ids = [op.id for op in dfg.operations]
    succ: dict[str, set[str]] = {i: set() for i in ids}
    for e in dfg.edges:
        for sink, _ in e.sinks:
            succ[e.driver].add(sink)
    comps = _sccs(ids, succ)
    comp_of = {}
    for ci, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = ci
    is_sink_comp = [True] * len(comps)
    for v in ids:
        for w in succ[v]:
            if comp_of[v] != comp_of[w]:
                is_sink_comp[comp_of[v]] = False
    return frozenset(min(comp) for ci, comp in enumerate(comps) if is_sink_comp[ci])


def fanin_cone(dfg: Dfg, roots: Iterable[str]) -> frozenset[str]:
    """All ops backward-reachable from roots, roots included."""
    pred: dict[str, set[str]] = {op.id: set() for op in dfg.operations}
    for e in dfg.edges:
        for sink, _ in e.sinks:
            pred[sink].add(e.driver)
    seen = set()
    todo = [r for r in roots]
    while todo:
        v = todo.pop()
        if v in seen:
            continue
        seen.add(v)
        todo.extend(pred[v] - seen)
    return frozenset(seen)

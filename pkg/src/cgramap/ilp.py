"""0/1 model construction for placement and routing.

Three variable classes: f (operation o sits on unit u), e (DFG edge from
o on u to p on v), p (path q between units u and v is switched on). The
constraint families:

  con1  unit exclusivity: each FU hosts at most one operation
  con2  must map: cover ops placed exactly once, all others at most once
  con3  fanin required: a placed sink needs an incoming edge assignment
  con4  fanout implies usage: an edge assignment claims its driver unit
  con5  path required: an assigned edge needs a switched-on path
  con6  path exclusivity: overlapping paths with distinct drivers

Four variants are built from these: placement_only (con1-4),
relaxed_placement (con1-5 plus a per-vertex overuse form of con6),
routing_only (con5-6 with edge assignments fixed by a given placement)
and combined (con1-6 exact).
"""

from __future__ import annotations

from dataclasses import dataclass

from .dfg import Dfg, cover_set
from .mrrg import Mrrg, NodeKey, compatible_nodes, fu_nodes
from .neighbors import NeighborMap
from .paths import PathCache

VARIANTS = ("placement_only", "relaxed_placement", "routing_only", "combined")
MODEL_KINDS = VARIANTS + ("baseline",)


class InfeasibleModel(Exception):
    """Construction already proves there is no solution."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True, order=True)
class VarId:
    cls: str
    idx: tuple


def fvar(op: str, u: NodeKey) -> VarId:
    return VarId("f", (op, u))


def evar(o: str, u: NodeKey, p: str, v: NodeKey) -> VarId:
    return VarId("e", (o, u, p, v))


def pvar(u: NodeKey, v: NodeKey, q: int) -> VarId:
    return VarId("p", (u, v, q))


@dataclass(frozen=True)
class LinearConstraint:
    terms: tuple[tuple[int, VarId], ...]
    relation: str
    rhs: int
    tag: str


class IlpModel:
    """Mutable while building, treated as frozen afterwards."""

    def __init__(self, variant: str, **metadata):
        if variant not in MODEL_KINDS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.metadata = dict(metadata)
        self.variables: list[VarId] = []
        self._declared: dict[VarId, int] = {}
        self.constraints: list[LinearConstraint] = []
        self.objective: tuple[tuple[int, VarId], ...] | None = None
        self._con6_seen: set = set()

    def add_var(self, var: VarId) -> VarId:
        if var not in self._declared:
            self._declared[var] = len(self.variables)
            self.variables.append(var)
        return var

    def has_var(self, var: VarId) -> bool:
        return var in self._declared

    def add_constraint(self, terms, relation: str, rhs: int, tag: str) -> bool:
        """Append one row; returns False when a duplicate con6 row was
        dropped instead."""
        if relation not in ("<=", "=", ">="):
            raise ValueError(f"bad relation {relation!r}")
        canon = tuple(sorted(((c, v) for c, v in terms), key=lambda t: t[1]))
        seen = set()
        for _, v in canon:
            if v in seen:
                raise ValueError(f"duplicate variable {v} in constraint")
            if v not in self._declared:
                raise ValueError(f"constraint references undeclared {v}")
            seen.add(v)
        if tag == "con6":
            key = self._con6_key(canon, relation, rhs)
            if key in self._con6_seen:
                return False
            self._con6_seen.add(key)
        self.constraints.append(LinearConstraint(canon, relation, rhs, tag))
        return True

    def _con6_key(self, canon, relation, rhs):
        # pairwise rows are keyed by compact variable ids; they dominate
        # the exact models by far
        if relation == "<=" and rhs == 1 and len(canon) == 2 \
                and canon[0][0] == 1 and canon[1][0] == 1:
            return (self._declared[canon[0][1]], self._declared[canon[1][1]])
        return (canon, relation, rhs)

    def vars_by_class(self) -> dict[str, list[VarId]]:
        out: dict[str, list[VarId]] = {}
        for v in self.variables:
            out.setdefault(v.cls, []).append(v)
        return out

    def stats(self) -> str:
        by_cls = {c: len(vs) for c, vs in self.vars_by_class().items()}
        by_tag: dict[str, int] = {}
        for con in self.constraints:
            by_tag[con.tag] = by_tag.get(con.tag, 0) + 1
        lines = [f"variant {self.variant}"]
        for key in sorted(self.metadata):
            lines.append(f"{key} {self.metadata[key]}")
        parts = " ".join(f"{c}={n}" for c, n in sorted(by_cls.items()))
        lines.append(f"variables total={len(self.variables)} {parts}".rstrip())
        parts = " ".join(f"{t}={n}" for t, n in sorted(by_tag.items()))
        lines.append(f"constraints total={len(self.constraints)} {parts}".rstrip())
        if self.objective is not None:
            lines.append(f"objective terms={len(self.objective)}")
        return "\n".join(lines)


def declare_f(model: IlpModel, dfg: Dfg, mrrg: Mrrg) -> None:
    for op in dfg.operations:
        cands = compatible_nodes(mrrg, op)
        if not cands:
            raise InfeasibleModel(f"operation {op.id} has no compatible unit")
        for u in cands:
            model.add_var(fvar(op.id, u))


def declare_e(model: IlpModel, dfg: Dfg, mrrg: Mrrg, nmap: NeighborMap) -> None:
    ops = dfg.ops_by_id
    for o, p in dfg.point_edges():
        for u in compatible_nodes(mrrg, ops[o]):
            reach = set(nmap[u])
            for v in compatible_nodes(mrrg, ops[p]):
                if v not in reach:
                    continue
                # a loop edge can only close on the unit hosting the op
                if o == p and v != u:
                    continue
                model.add_var(evar(o, u, p, v))


def used_pairs(model: IlpModel) -> list[tuple[NodeKey, NodeKey]]:
    pairs = {(var.idx[1], var.idx[3]) for var in model.variables
             if var.cls == "e"}
    return sorted(pairs)


def declare_p(model: IlpModel, cache: PathCache,
              pairs, paths_per_connection: int) -> None:
    for u, v in sorted(pairs):
        n = min(paths_per_connection, len(cache.get((u, v))))
        for q in range(n):
            model.add_var(pvar(u, v, q))


def _f_index(model: IlpModel) -> dict[str, list[VarId]]:
    out: dict[str, list[VarId]] = {}
    for var in model.variables:
        if var.cls == "f":
            out.setdefault(var.idx[0], []).append(var)
    return out


def add_fu_exclusivity(model: IlpModel, dfg: Dfg, fus) -> None:
    by_u: dict[NodeKey, list[VarId]] = {}
    for var in model.variables:
        if var.cls == "f":
            by_u.setdefault(var.idx[1], []).append(var)
    for u in sorted(fus):
        terms = by_u.get(u)
        if terms:
            model.add_constraint([(1, v) for v in terms], "<=", 1, "con1")


def add_must_map(model: IlpModel, dfg: Dfg,
                 allow_duplication: bool = False) -> None:
    cover = cover_set(dfg)
    index = _f_index(model)
    for op in dfg.operations:
        terms = [(1, v) for v in index.get(op.id, ())]
        if not terms:
            raise InfeasibleModel(f"operation {op.id} has no compatible unit")
        if op.id in cover:
            model.add_constraint(terms, ">=" if allow_duplication else "=",
                                 1, "con2")
        elif not allow_duplication:
            model.add_constraint(terms, "<=", 1, "con2")


def add_fanin_required(model: IlpModel, dfg: Dfg) -> None:
    e_by_opv: dict[tuple, list[VarId]] = {}
    for var in model.variables:
        if var.cls == "e":
            o, u, p, v = var.idx
            e_by_opv.setdefault((o, p, v), []).append(var)
    index = _f_index(model)
    for o, p in dfg.point_edges():
        for fv in index.get(p, ()):
            v = fv.idx[1]
            terms = [(1, fv)]
            terms += [(-1, ev) for ev in e_by_opv.get((o, p, v), ())]
            model.add_constraint(terms, "<=", 0, "con3")


def add_fanout_implies_usage(model: IlpModel) -> None:
    for var in list(model.variables):
        if var.cls == "e":
            o, u, p, v = var.idx
            model.add_constraint([(1, var), (-1, fvar(o, u))], "<=", 0, "con4")


def add_path_required(model: IlpModel, cache: PathCache,
                      paths_per_connection: int) -> None:
    for var in list(model.variables):
        if var.cls != "e":
            continue
        o, u, p, v = var.idx
        n = min(paths_per_connection, len(cache.get((u, v))))
        terms = [(1, var)] + [(-1, pvar(u, v, q)) for q in range(n)]
        model.add_constraint(terms, "<=", 0, "con5")


def _interior_buckets(model: IlpModel, cache: PathCache):
    # vertex -> path vars whose interior crosses it (the driver is the
    # first index of each path var)
    buckets: dict[NodeKey, list[VarId]] = {}
    for var in model.variables:
        if var.cls != "p":
            continue
        u, v, q = var.idx
        for n in cache[(u, v)][q].interior():
            buckets.setdefault(n, []).append(var)
    return buckets


def add_path_exclusivity(model: IlpModel, cache: PathCache,
                         overuse_limit: int) -> None:
    """Exact pairwise rows at limit 1; at higher limits one row per
    (vertex, path) bounding how many foreign-driver paths may share the
    vertex once that path is on."""
    if overuse_limit < 1:
        raise ValueError("overuse_limit must be positive")
    buckets = _interior_buckets(model, cache)
    if overuse_limit == 1:
        # the pairwise rows repeat across every shared vertex, so dedup
        # on compact ids first and append rows directly
        ids = model._declared
        pairs = set()
        for ents in buckets.values():
            ents = sorted(ents)
            for i in range(len(ents)):
                pi, di = ents[i], ents[i].idx[0]
                for j in range(i + 1, len(ents)):
                    if ents[j].idx[0] != di:
                        pairs.add((ids[pi], ids[ents[j]]))
        for key in sorted(pairs):
            if key in model._con6_seen:
                continue
            model._con6_seen.add(key)
            a, b = model.variables[key[0]], model.variables[key[1]]
            model.constraints.append(
                LinearConstraint(((1, a), (1, b)), "<=", 1, "con6"))
        return
    for n in sorted(buckets):
        ents = buckets[n]
        for pv in ents:
            u = pv.idx[0]
            others = sorted({ov for ov in ents if ov.idx[0] != u})
            if not others:
                continue
            big = len(others)
            terms = [(1, ov) for ov in others] + [(big, pv)]
            model.add_constraint(terms, "<=", overuse_limit - 1 + big, "con6")


def set_cost_function(model: IlpModel, k_coeffs=None, l_coeffs=None,
                      m_coeffs=None) -> None:
    merged: dict[VarId, int] = {}
    for coeffs in (k_coeffs, l_coeffs, m_coeffs):
        for var, c in (coeffs or {}).items():
            if not model.has_var(var):
                raise ValueError(f"cost on undeclared variable {var}")
            merged[var] = merged.get(var, 0) + c
    model.objective = tuple(sorted(
        ((c, v) for v, c in merged.items() if c != 0),
        key=lambda t: t[1])) or None


def build_variant(variant: str, dfg: Dfg, mrrg: Mrrg, nmap: NeighborMap,
                  cache: PathCache | None = None, *,
                  paths_per_connection: int | None = None,
                  overuse_limit: int | None = None,
                  placement: dict[str, NodeKey] | None = None,
                  allow_duplication: bool = False) -> IlpModel:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "routing_only":
        return _build_routing_only(dfg, mrrg, nmap, cache, placement,
                                   paths_per_connection)
    model = IlpModel(variant, nn=nmap.target_nn,
                     k=cache.k if cache else None)
    declare_f(model, dfg, mrrg)
    declare_e(model, dfg, mrrg, nmap)
    add_fu_exclusivity(model, dfg, fu_nodes(mrrg))
    add_must_map(model, dfg, allow_duplication)
    add_fanin_required(model, dfg)
    add_fanout_implies_usage(model)
    if variant == "placement_only":
        return model
    if cache is None:
        raise ValueError(f"{variant} needs a path cache")
    if variant == "relaxed_placement":
        ppc = 3 if paths_per_connection is None else paths_per_connection
        limit = 2 if overuse_limit is None else overuse_limit
    else:
        ppc = cache.k if paths_per_connection is None else paths_per_connection
        limit = 1 if overuse_limit is None else overuse_limit
    model.metadata.update(paths_per_connection=ppc, overuse_limit=limit)
    declare_p(model, cache, used_pairs(model), ppc)
    add_path_required(model, cache, ppc)
    add_path_exclusivity(model, cache, limit)
    return model


def _build_routing_only(dfg, mrrg, nmap, cache, placement,
                        paths_per_connection):
    if placement is None:
        raise ValueError("routing_only needs a fixed placement")
    if cache is None:
        raise ValueError("routing_only needs a path cache")
    ops = dfg.ops_by_id
    taken: dict[NodeKey, str] = {}
    for o, u in placement.items():
        if u not in compatible_nodes(mrrg, ops[o]):
            raise InfeasibleModel(f"operation {o} placed on incompatible {u}")
        if u in taken:
            raise InfeasibleModel(f"unit {u} hosts both {taken[u]} and {o}")
        taken[u] = o
    ppc = cache.k if paths_per_connection is None else paths_per_connection
    model = IlpModel("routing_only", nn=nmap.target_nn, k=cache.k,
                     paths_per_connection=ppc, overuse_limit=1)
    pairs = []
    for o, p in dfg.point_edges():
        if o not in placement or p not in placement:
            raise ValueError(f"routing_only placement misses edge ({o}, {p})")
        u, v = placement[o], placement[p]
        if v not in nmap[u]:
            raise InfeasibleModel(f"no neighborhood route {u} -> {v}")
        pairs.append((u, v))
    declare_p(model, cache, set(pairs), ppc)
    for u, v in sorted(set(pairs)):
        n = min(ppc, len(cache.get((u, v))))
        if n == 0:
            raise InfeasibleModel(f"no cached path {u} -> {v}")
        terms = [(1, pvar(u, v, q)) for q in range(n)]
        model.add_constraint(terms, ">=", 1, "con5")
    add_path_exclusivity(model, cache, 1)
    return model


def audit(model: IlpModel, dfg: Dfg, mrrg: Mrrg, nmap: NeighborMap,
          cache: PathCache | None = None) -> list[str]:
    """Re-derive every variable's existence precondition and the model's
    structural invariants; returns found problems."""
    problems = []
    ops = dfg.ops_by_id
    edges = set(dfg.point_edges())
    for var in model.variables:
        if var.cls == "f":
            o, u = var.idx
            if o not in ops or u not in compatible_nodes(mrrg, ops[o]):
                problems.append(f"f out of domain: {var}")
        elif var.cls == "e":
            o, u, p, v = var.idx
            ok = ((o, p) in edges
                  and o in ops and u in compatible_nodes(mrrg, ops[o])
                  and p in ops and v in compatible_nodes(mrrg, ops[p])
                  and v in nmap[u])
            if not ok:
                problems.append(f"e out of domain: {var}")
        elif var.cls == "p":
            u, v, q = var.idx
            if cache is None or q >= len(cache.get((u, v))):
                problems.append(f"p out of domain: {var}")
        else:
            problems.append(f"unknown class: {var}")
    declared = set(model.variables)
    if len(declared) != len(model.variables):
        problems.append("duplicate variable declaration")
    con6 = set()
    for con in model.constraints:
        vs = [v for _, v in con.terms]
        if len(set(vs)) != len(vs):
            problems.append(f"duplicate term in {con.tag} row")
        for v in vs:
            if v not in declared:
                problems.append(f"{con.tag} row references undeclared {v}")
        if con.tag == "con6":
            key = (con.terms, con.relation, con.rhs)
            if key in con6:
                problems.append("duplicate con6 row")
            con6.add(key)
    return problems

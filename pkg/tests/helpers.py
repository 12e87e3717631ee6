"""Reference oracles for the test suite.

Everything here is written against the documented semantics only and stays
independent of the package's search and model-building code paths: plain
fixpoint scans, exhaustive recursion, no shared helpers.
"""

from __future__ import annotations


def fu_depths(mrrg, source):
    """Hop depth of every FU discoverable from source.

    Plain layered reachability, recomputing each layer from the visited set.
    FUs terminate exploration; the source only gains a depth if some
    expanded vertex points back at it.
    """
    depths = {}
    visited = {source}
    layer = [source]
    depth = 0
    while layer:
        depth += 1
        nxt = []
        for n in layer:
            for m in mrrg.fanout(n):
                if m == source:
                    depths.setdefault(source, depth)
                    continue
                if m in visited:
                    continue
                visited.add(m)
                if mrrg.is_fu(m):
                    depths.setdefault(m, depth)
                else:
                    nxt.append(m)
        layer = nxt
    return depths


def neighbors_oracle(mrrg, source, target):
    """Wave rule replayed over the global depth map: take whole depth
    groups in order until the running count reaches the target."""
    depths = fu_depths(mrrg, source)
    by_depth = {}
    for fu, d in depths.items():
        by_depth.setdefault(d, []).append(fu)
    picked = []
    for d in sorted(by_depth):
        if len(picked) >= target:
            break
        picked.extend(by_depth[d])
    return tuple(sorted(picked))


def satisfies(constraints, on_vars):
    """Evaluate 0/1 rows directly: variables in on_vars are 1, all other
    variables 0."""
    on = set(on_vars)
    for con in constraints:
        lhs = sum(c for c, v in con.terms if v in on)
        if con.relation == "<=" and lhs > con.rhs:
            return False
        if con.relation == ">=" and lhs < con.rhs:
            return False
        if con.relation == "=" and lhs != con.rhs:
            return False
    return True


def all_simple_paths(mrrg, u, v, interior_ok=None):
    """Every simple path from FU u to FU v whose interior vertices are
    routing nodes. For u == v, cycles through u (length >= 1). Exhaustive
    recursion; intended for small graphs."""
    if interior_ok is None:
        interior_ok = lambda k: not mrrg.is_fu(k)
    paths = []
    seen = {u}

    def walk(n, acc):
        for m in mrrg.fanout(n):
            if m == v:
                paths.append((u, *acc, v))
                continue  # the sink FU is never expanded through
            if m in seen or not interior_ok(m):
                continue
            seen.add(m)
            acc.append(m)
            walk(m, acc)
            acc.pop()
            seen.discard(m)

    walk(u, [])
    return paths


def exhaustive(model):
    """(feasible, best objective) over all 2^n assignments. Small models
    only; the solver tests lean on this as the ground truth."""
    from itertools import product

    from cgramap.solver import check_assignment

    feasible = False
    best = None
    names = list(model.variables)
    for bits in product((0, 1), repeat=len(names)):
        a = dict(zip(names, bits))
        if check_assignment(model.constraints, a):
            continue
        feasible = True
        if not model.objective:
            return True, None
        value = sum(c * a[v] for c, v in model.objective)
        if best is None or value < best:
            best = value
    return feasible, best


def brute_force_mappable(dfg, mrrg):
    """Exhaustive search over total placements and per-connection simple
    paths, with interiors of different drivers kept disjoint. Ground
    truth for tiny instances."""
    from cgramap.mrrg import compatible_nodes

    ops = [op.id for op in dfg.operations]
    cands = {op.id: compatible_nodes(mrrg, op) for op in dfg.operations}
    pairs = dfg.point_edges()
    path_cache = {}

    def paths_for(u, v):
        if (u, v) not in path_cache:
            path_cache[u, v] = all_simple_paths(mrrg, u, v)
        return path_cache[u, v]

    def routable(placement):
        order = sorted(pairs, key=lambda e: len(paths_for(placement[e[0]],
                                                          placement[e[1]])))
        taken = []

        def rec(i):
            if i == len(order):
                return True
            o, _ = order[i]
            u, v = placement[order[i][0]], placement[order[i][1]]
            for path in paths_for(u, v):
                interior = set(path[1:-1])
                if any(o2 != o and (interior & used) for o2, used in taken):
                    continue
                taken.append((o, interior))
                if rec(i + 1):
                    return True
                taken.pop()
            return False

        return rec(0)

    placement = {}
    used_units = set()

    def place(i):
        if i == len(ops):
            return routable(placement)
        o = ops[i]
        for u in cands[o]:
            if u in used_units:
                continue
            placement[o] = u
            used_units.add(u)
            if place(i + 1):
                return True
            used_units.discard(u)
            del placement[o]
        return False

    return place(0)

"""Neighbour discovery: which FUs can feed which other FUs.

Breadth-first search from a source FU along fanout edges, advancing in whole
waves. After each wave the number of FUs discovered so far is compared to
the target; once it reaches the target the search stops and everything
discovered is returned, including the entire final wave, so the result can
overshoot the target but never splits a wave. If the graph is exhausted
first, all reachable FUs are returned.

FU vertices are discovery endpoints: they are recorded but never expanded
through, because a value cannot pass through a function unit without
occupying it (route-throughs are explicit routing vertices and are traversed
normally). The source itself is excluded unless the search walks a cycle
back into it, in which case it is its own neighbour.
"""

from __future__ import annotations

from dataclasses import dataclass

from .mrrg import Mrrg, NodeKey, fu_nodes


def find_neighbors(mrrg: Mrrg, source: NodeKey, target_nn: int,
                   bidirectional: bool = False) -> tuple[NodeKey, ...]:
    """Sorted FU keys discovered from source under the wave stop rule.

    bidirectional additionally walks fanin edges; off by default, kept for
    experiments with symmetric reachability.
    """
    if source not in mrrg.nodes:
        raise KeyError(f"unknown node {source}")
    if not mrrg.is_fu(source):
        raise ValueError(f"{source} is not an FU node")

    def succ(k: NodeKey):
        if not bidirectional:
            return mrrg.fanout(k)
        return tuple(sorted(set(mrrg.fanout(k)) | set(mrrg.fanin(k))))

    found: set[NodeKey] = set()
    visited: set[NodeKey] = {source}
    frontier: list[NodeKey] = [source]
    while frontier and len(found) < target_nn:
        nxt: list[NodeKey] = []
        for n in frontier:
            for m in succ(n):
                if m == source:
                    found.add(source)  # re-reached via a cycle
                    continue
                if m in visited:
                    continue
                visited.add(m)
                if mrrg.is_fu(m):
                    found.add(m)
                else:
                    nxt.append(m)
        frontier = nxt
    return tuple(sorted(found))


@dataclass(frozen=True)
class NeighborMap:
    target_nn: int
    neighbors: dict[NodeKey, tuple[NodeKey, ...]]

    def __getitem__(self, key: NodeKey) -> tuple[NodeKey, ...]:
        return self.neighbors[key]


def build_neighbor_map(mrrg: Mrrg, target_nn: int,
                       bidirectional: bool = False) -> NeighborMap:
    """find_neighbors for every FU vertex."""
    if target_nn < 1:
        raise ValueError(f"target_nn must be >= 1, got {target_nn}")
    return NeighborMap(
        target_nn,
        {u: find_neighbors(mrrg, u, target_nn, bidirectional)
         for u in fu_nodes(mrrg)},
    )

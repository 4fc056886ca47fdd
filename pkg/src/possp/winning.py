"""Belief-support MDP, almost-sure winning supports, allowed actions."""

from __future__ import annotations

from dataclasses import dataclass

from . import belief
from .model import ModelError, Pomdp, ResourceLimitError

DEFAULT_EDGE_BUDGET = 5_000_000


@dataclass(eq=False)
class SupportMdp:
    """Perfect-observation MDP over belief-supports reachable from the start."""

    pomdp: Pomdp
    nodes: tuple[tuple[int, ...], ...]            # sorted supports, index order
    index: dict
    edges: dict                                    # (node_i, action) -> tuple[node_i, ...]
    target_nodes: frozenset[int]                   # supports entirely inside T
    initial: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


@dataclass(eq=False)
class WinningTable:
    """Almost-sure winning supports with their safe actions.

    allow maps each winning support to the actions whose every successor
    support stays winning; sigma_allow plays those uniformly at random.
    """

    pomdp: Pomdp
    mdp: SupportMdp
    win: frozenset                                 # winning supports (tuples)
    allow: dict                                    # support -> tuple[int, ...]
    sigma_allow: dict                              # support -> {action: prob}

    def is_winning(self, support) -> bool:
        return support in self.win

    @property
    def initial_winning(self) -> bool:
        return self.mdp.nodes[self.mdp.initial] in self.win


def build_support_mdp(p: Pomdp, edge_budget: int = DEFAULT_EDGE_BUDGET) -> SupportMdp:
    """Breadth-first closure of the initial support under all actions."""
    for t in p.targets:
        z = int(p.obs_of[t])
        members = p.obs_members(z)
        if any(int(s) not in p.targets for s in members):
            raise ModelError(
                "targets share an observation with non-targets; apply observe_targets first"
            )
    start = tuple(sorted(p.initial.support))
    nodes: list[tuple[int, ...]] = [start]
    index = {start: 0}
    edges: dict[tuple[int, int], tuple[int, ...]] = {}
    n_edges = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            support = nodes[u]
            for a in range(p.n_actions):
                succ = sorted(belief.successors(p, support, a))
                ids = []
                for v in succ:
                    if v not in index:
                        index[v] = len(nodes)
                        nodes.append(v)
                        nxt.append(index[v])
                    ids.append(index[v])
                edges[(u, a)] = tuple(ids)
                n_edges += len(ids)
                if n_edges > edge_budget:
                    raise ResourceLimitError(
                        f"support MDP exceeded the edge budget of {edge_budget}"
                    )
        frontier = nxt
    target_nodes = frozenset(
        i for i, v in enumerate(nodes) if all(s in p.targets for s in v)
    )
    return SupportMdp(
        pomdp=p,
        nodes=tuple(nodes),
        index=index,
        edges=edges,
        target_nodes=target_nodes,
        initial=0,
    )


def almost_sure_winning(m: SupportMdp) -> WinningTable:
    """Largest support set closed under some action and reaching the targets.

    Alternates two prunes until a fixpoint: drop actions that may leave the
    candidate set, then drop nodes with no surviving action or no path to a
    target through surviving actions.  Iteration order is by node index so
    the resulting tables are reproducible.
    """
    p = m.pomdp
    n = m.n_nodes
    alive = [True] * n
    while True:
        kept: dict[int, list[int]] = {}
        for u in range(n):
            if not alive[u]:
                continue
            acts = [
                a
                for a in range(p.n_actions)
                if all(alive[v] for v in m.edges[(u, a)])
            ]
            kept[u] = acts
        # backward reachability to targets through kept actions
        rev: dict[int, set[int]] = {u: set() for u in kept}
        for u, acts in kept.items():
            for a in acts:
                for v in m.edges[(u, a)]:
                    rev[v].add(u)
        reach = {u for u in kept if u in m.target_nodes}
        stack = sorted(reach)
        while stack:
            v = stack.pop()
            for u in rev[v]:
                if u not in reach:
                    reach.add(u)
                    stack.append(u)
        changed = False
        for u in list(kept):
            if not kept[u] or u not in reach:
                alive[u] = False
                changed = True
        if not changed:
            win_nodes = sorted(kept)
            win = frozenset(m.nodes[u] for u in win_nodes)
            allow = {m.nodes[u]: tuple(kept[u]) for u in win_nodes}
            sigma = {
                sup: {a: 1.0 / len(acts) for a in acts}
                for sup, acts in allow.items()
            }
            return WinningTable(pomdp=p, mdp=m, win=win, allow=allow, sigma_allow=sigma)

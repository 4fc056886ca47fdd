"""Finite-horizon value iteration restricted to allowed actions.

Two backends: an exact layered-DAG backend and a trial-based backend over
discretized beliefs.  Both only ever select actions the winning table allows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .belief import BeliefPoint, update_point
from .model import ModelError, Pomdp, ResourceLimitError
from .winning import WinningTable

DEFAULT_NODE_BUDGET = 2_000_000


def _expand_point(p: Pomdp, b: BeliefPoint, a: int):
    """One-step image of b under a: (immediate cost, [(z, lik, b')]).

    Branches are ordered by observation index; likelihoods over z sum to 1.
    """
    cost = math.fsum(bp * float(p.cost[s, a]) for s, bp in zip(b.states, b.probs))
    num: dict[int, dict[int, float]] = {}
    for s, bp in zip(b.states, b.probs):
        idx, pr = p.row(s, a)
        for s2, p2 in zip(idx, pr):
            z = int(p.obs_of[s2])
            bucket = num.setdefault(z, {})
            s2 = int(s2)
            bucket[s2] = bucket.get(s2, 0.0) + bp * float(p2)
    branches = []
    for z in sorted(num):
        bucket = num[z]
        lik = math.fsum(bucket.values())
        if lik <= 0.0:
            continue
        states = sorted(bucket)
        child = BeliefPoint(states, [bucket[s] / lik for s in states])
        branches.append((z, lik, child))
    return cost, branches


class LayeredBeliefDag:
    """Beliefs reachable from the start, layer per depth, allowed actions only.

    Extending to a deeper horizon reuses all shallower layers, so the driver
    can grow one DAG across its iterations.  Beliefs supported entirely on
    targets are terminal and never expanded.
    """

    def __init__(self, p: Pomdp, w: WinningTable, node_budget: int = DEFAULT_NODE_BUDGET):
        self.p = p
        self.w = w
        self.node_budget = node_budget
        self.root = BeliefPoint.from_distribution(p.initial)
        if self.root.support not in w.win:
            raise ModelError("initial support is not almost-sure winning")
        self.layers: list[dict] = [{self.root.key: self.root}]
        # edges[d][key] = ((action, step cost, ((z, lik, child key), ...)), ...)
        self.edges: list[dict] = []
        self.nodes_total = 1

    def is_terminal(self, b: BeliefPoint) -> bool:
        return all(self.p.is_target(s) for s in b.states)

    def extend_to(self, depth: int) -> None:
        while len(self.edges) < depth:
            d = len(self.edges)
            nxt: dict = {}
            ed: dict = {}
            for key, b in self.layers[d].items():
                if self.is_terminal(b):
                    continue
                per_action = []
                for a in self.w.allow[b.support]:
                    cost, branches = _expand_point(self.p, b, a)
                    out = []
                    for z, lik, child in branches:
                        if child.key not in nxt:
                            nxt[child.key] = child
                        out.append((z, lik, child.key))
                    per_action.append((a, cost, tuple(out)))
                ed[key] = tuple(per_action)
            self.nodes_total += len(nxt)
            if self.nodes_total > self.node_budget:
                raise ResourceLimitError(
                    f"belief DAG exceeded {self.node_budget} nodes;"
                    " consider the discretized backend"
                )
            self.layers.append(nxt)
            self.edges.append(ed)


@dataclass(eq=False)
class FiniteHorizonPolicy:
    """Decision table of the optimal allowed-action strategy for horizon k."""

    horizon: int
    table: dict                       # (belief key, steps remaining) -> action
    values: dict                      # (belief key, steps remaining) -> value

    exact: bool = True

    def action(self, b: BeliefPoint, remaining: int) -> int:
        return self.table[(b.key, remaining)]


@dataclass(eq=False)
class HorizonResult:
    policy: object
    t_k: float
    alpha_k: float
    exact: bool
    dag: LayeredBeliefDag | None = None


def exact_vi(p: Pomdp, w: WinningTable, k: int,
             dag: LayeredBeliefDag | None = None,
             node_budget: int = DEFAULT_NODE_BUDGET) -> HorizonResult:
    """Backward induction over the layered belief DAG.

    T_k is the k-step optimal expected cost from the start; alpha_k the
    probability that the greedy strategy has not absorbed into the targets
    after k transitions.  Ties break toward the lowest action index.
    """
    if k < 1:
        raise ValueError("horizon must be at least 1")
    if dag is None:
        dag = LayeredBeliefDag(p, w, node_budget=node_budget)
    dag.extend_to(k)

    values: dict = {}
    table: dict = {}
    level = {key: 0.0 for key in dag.layers[k]}
    for key in dag.layers[k]:
        values[(key, 0)] = 0.0
    for d in range(k - 1, -1, -1):
        n = k - d
        nxt_level = level
        level = {}
        for key, b in dag.layers[d].items():
            if dag.is_terminal(b):
                level[key] = 0.0
                values[(key, n)] = 0.0
                table[(key, n)] = w.allow[b.support][0]
                continue
            best = None
            best_a = None
            for a, cost, branches in dag.edges[d][key]:
                q = cost + math.fsum(lik * nxt_level[ck] for _, lik, ck in branches)
                if best is None or q < best:
                    best, best_a = q, a
            level[key] = best
            values[(key, n)] = best
            table[(key, n)] = best_a

    t_k = level[dag.root.key]

    # forward greedy pass for the miss probability
    mass = {dag.root.key: 1.0}
    absorbed = 0.0
    for d in range(k):
        nxt_mass: dict = {}
        for key, m in mass.items():
            b = dag.layers[d][key]
            if dag.is_terminal(b):
                absorbed += m
                continue
            chosen = table[(key, k - d)]
            for a, _, branches in dag.edges[d][key]:
                if a == chosen:
                    for _, lik, ck in branches:
                        nxt_mass[ck] = nxt_mass.get(ck, 0.0) + m * lik
                    break
        mass = nxt_mass
    tmask = p.target_mask
    on_target = math.fsum(m * dag.layers[k][key].mass_on(tmask) for key, m in mass.items())
    alpha = min(1.0, max(0.0, 1.0 - absorbed - on_target))

    policy = FiniteHorizonPolicy(horizon=k, table=table, values=values, exact=True)
    return HorizonResult(policy=policy, t_k=t_k, alpha_k=alpha, exact=True, dag=dag)


# -- discretized trial-based backend ----------------------------------------


def _disc_key(b: BeliefPoint, d: int):
    return (b.states, tuple(int(round(p * d)) for p in b.probs))


@dataclass(eq=False)
class DiscretizedPolicy:
    """Greedy policy over a trial-trained, discretized value table."""

    horizon: int
    pomdp: Pomdp
    winning: WinningTable
    discretization: int
    values: dict                      # (disc key, steps remaining) -> value
    exact: bool = False

    def _q(self, b: BeliefPoint, a: int, remaining: int):
        cost, branches = _expand_point(self.pomdp, b, a)
        q = cost
        for _, lik, child in branches:
            q += lik * self.values.get((_disc_key(child, self.discretization), remaining - 1), 0.0)
        return q, branches

    def action(self, b: BeliefPoint, remaining: int) -> int:
        best, best_a = None, None
        for a in self.winning.allow[b.support]:
            q, _ = self._q(b, a, remaining)
            if best is None or q < best:
                best, best_a = q, a
        return best_a


def rtdp_backend(p: Pomdp, w: WinningTable, k: int,
                 discretization: int = 100, trials: int = 10_000,
                 seed: int = 0) -> HorizonResult:
    """Trial-based finite-horizon approximation over discretized beliefs.

    Runs `trials` greedy training trials with Bellman backups at every
    visited belief, then estimates T_k and alpha_k from `trials` fresh
    greedy rollouts; alpha_k is reported as a 99% upper confidence bound.
    No soundness guarantee; results are deterministic for a fixed seed.
    """
    root = BeliefPoint.from_distribution(p.initial)
    if root.support not in w.win:
        raise ModelError("initial support is not almost-sure winning")
    values: dict = {}
    pol = DiscretizedPolicy(horizon=k, pomdp=p, winning=w,
                            discretization=discretization, values=values)
    terminal = lambda b: all(p.is_target(s) for s in b.states)

    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(trials):
        b = root
        for n in range(k, 0, -1):
            if terminal(b):
                break
            best, best_branches = None, None
            for a in w.allow[b.support]:
                q, branches = pol._q(b, a, n)
                if best is None or q < best:
                    best, best_branches = q, branches
            values[(_disc_key(b, discretization), n)] = best
            u = rng.random()
            acc = 0.0
            child = best_branches[-1][2]
            for _, lik, cb in best_branches:
                acc += lik
                if u < acc:
                    child = cb
                    break
            b = child

    totals = np.empty(trials)
    missed = 0
    tmask = p.target_mask
    for i in range(trials):
        trng = np.random.Generator(np.random.PCG64(seed + 1 + i))
        b = root
        s = _sample_dist(p.initial.items(), trng)
        total = 0.0
        reached = bool(tmask[s])
        for n in range(k, 0, -1):
            if reached:
                break
            a = pol.action(b, n)
            total += float(p.cost[s, a])
            idx, pr = p.row(s, a)
            s = int(idx[_pick(pr, trng)])
            b = _update_for_sim(p, b, a, int(p.obs_of[s]))
            if tmask[s]:
                reached = True
        totals[i] = total
        if not reached:
            missed += 1

    t_hat = float(totals.mean())
    a_hat = missed / trials
    if missed == 0:
        alpha = -math.log(0.01) / trials
    else:
        alpha = a_hat + 2.5758293035489004 * math.sqrt(a_hat * (1 - a_hat) / trials)
    alpha = min(1.0, alpha)
    return HorizonResult(policy=pol, t_k=t_hat, alpha_k=alpha, exact=False)


def _pick(pr: np.ndarray, rng) -> int:
    u = rng.random()
    acc = 0.0
    for i, q in enumerate(pr):
        acc += float(q)
        if u < acc:
            return i
    return len(pr) - 1


def _sample_dist(items, rng) -> int:
    u = rng.random()
    acc = 0.0
    for s, q in items:
        acc += q
        if u < acc:
            return s
    return items[-1][0]


def _update_for_sim(p: Pomdp, b: BeliefPoint, a: int, z: int) -> BeliefPoint:
    return update_point(p, b, a, z)

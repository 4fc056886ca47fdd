"""Product chain of the POMDP with the uniform fallback strategy, and the
exact hitting-cost bound computed from it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import belief
from .model import Pomdp, PosspError
from .winning import WinningTable

DENSE_LIMIT = 20_000
RESIDUAL_TOL = 1e-8
GS_TOL = 1e-10


class BoundError(PosspError):
    pass


@dataclass(eq=False)
class ProductChain:
    """Markov chain over (state, support) pairs induced by the fallback strategy."""

    pomdp: Pomdp
    states: tuple                    # tuple of (state index, support tuple)
    index: dict
    rows: tuple                      # per state: (np idx, np pr); absorbing rows self-loop
    step_cost: np.ndarray            # mean allowed-action cost per state
    absorbing: np.ndarray            # bool mask


@dataclass(eq=False)
class BoundReport:
    u_allow: float
    hitting: dict                    # (state, support) -> expected total cost
    residual: float                  # max-norm of h - c - Ph, relative to max(1, |h|)


def build_chain(p: Pomdp, w: WinningTable) -> ProductChain:
    """Expand the step law of the fallback strategy over all winning pairs."""
    if not w.win:
        raise BoundError("empty winning table")
    pairs = []
    for sup in sorted(w.win):
        for s in sup:
            pairs.append((s, sup))
    index = {ps: i for i, ps in enumerate(pairs)}
    rows = []
    cost = np.zeros(len(pairs))
    absorbing = np.zeros(len(pairs), dtype=bool)
    for i, (s, sup) in enumerate(pairs):
        if p.is_target(s):
            absorbing[i] = True
            rows.append((np.asarray([i], dtype=np.int64), np.asarray([1.0])))
            continue
        acts = w.allow[sup]
        share = 1.0 / len(acts)
        cost[i] = share * math.fsum(float(p.cost[s, a]) for a in acts)
        acc: dict[int, float] = {}
        for a in acts:
            idx, pr = p.row(s, a)
            for s2, p2 in zip(idx, pr):
                s2 = int(s2)
                sup2 = belief.update_support(p, sup, a, int(p.obs_of[s2]))
                j = index[(s2, sup2)]
                acc[j] = acc.get(j, 0.0) + share * float(p2)
        ks = sorted(acc)
        rows.append((np.asarray(ks, dtype=np.int64), np.asarray([acc[k] for k in ks])))
    return ProductChain(
        pomdp=p,
        states=tuple(pairs),
        index=index,
        rows=tuple(rows),
        step_cost=cost,
        absorbing=absorbing,
    )


def _check_reaches_absorbing(ch: ProductChain) -> None:
    n = len(ch.states)
    rev: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        for j in ch.rows[i][0]:
            rev[int(j)].append(i)
    seen = set(np.flatnonzero(ch.absorbing).tolist())
    stack = sorted(seen)
    while stack:
        v = stack.pop()
        for u in rev[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    if len(seen) != n:
        missing = [ch.states[i] for i in range(n) if i not in seen][:5]
        raise BoundError(f"chain states cannot reach the absorbing set, e.g. {missing}")


def _solve_dense(ch: ProductChain, live: np.ndarray) -> np.ndarray:
    k = live.size
    pos = {int(i): r for r, i in enumerate(live)}
    a = np.eye(k)
    for r, i in enumerate(live):
        idx, pr = ch.rows[int(i)]
        for j, pj in zip(idx, pr):
            c = pos.get(int(j))
            if c is not None:
                a[r, c] -= float(pj)
    return np.linalg.solve(a, ch.step_cost[live])


def _solve_gauss_seidel(ch: ProductChain, live: np.ndarray) -> np.ndarray:
    pos = {int(i): r for r, i in enumerate(live)}
    h = np.zeros(live.size)
    b = ch.step_cost[live]
    compact = []
    for r, i in enumerate(live):
        idx, pr = ch.rows[int(i)]
        cols, vals, diag = [], [], 0.0
        for j, pj in zip(idx, pr):
            c = pos.get(int(j))
            if c == r:
                diag = float(pj)
            elif c is not None:
                cols.append(c)
                vals.append(float(pj))
        compact.append((np.asarray(cols, dtype=np.int64), np.asarray(vals), diag))
    for _ in range(100_000):
        delta = 0.0
        for r in range(live.size):
            cols, vals, diag = compact[r]
            acc = float(np.dot(vals, h[cols])) if cols.size else 0.0
            new = (b[r] + acc) / (1.0 - diag)
            delta = max(delta, abs(new - h[r]))
            h[r] = new
        scale = max(1.0, float(np.abs(h).max()))
        if delta <= GS_TOL * scale:
            return h
    raise BoundError("iterative hitting-cost solve did not converge")


def hitting_bound(ch: ProductChain) -> BoundReport:
    """Solve h = c + P h with h = 0 on the absorbing set; return max h.

    The residual is verified in the max norm, scaled by max(1, |h|) so the
    check stays meaningful for chains with astronomically large costs.
    """
    _check_reaches_absorbing(ch)
    live = np.flatnonzero(~ch.absorbing)
    if live.size == 0:
        return BoundReport(u_allow=0.0, hitting={s: 0.0 for s in ch.states}, residual=0.0)
    if live.size <= DENSE_LIMIT:
        try:
            hvec = _solve_dense(ch, live)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by reach check
            raise BoundError(f"singular hitting-cost system: {exc}") from exc
    else:
        hvec = _solve_gauss_seidel(ch, live)
    h = np.zeros(len(ch.states))
    h[live] = hvec
    resid = 0.0
    for r, i in enumerate(live):
        idx, pr = ch.rows[int(i)]
        resid = max(resid, abs(h[i] - ch.step_cost[i] - float(np.dot(pr, h[idx]))))
    scale = max(1.0, float(np.abs(h).max()))
    if resid > RESIDUAL_TOL * scale:
        raise BoundError(f"hitting-cost residual {resid:.3g} exceeds tolerance")
    return BoundReport(
        u_allow=float(hvec.max()),
        hitting={ch.states[i]: float(h[i]) for i in range(len(ch.states))},
        residual=resid / scale,
    )

"""Policy simulation with confidence statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .belief import BeliefPoint, update_point, update_support
from .driver import CompositePolicy
from .model import Pomdp, PosspError
from .winning import WinningTable

Z99 = 2.5758293035489004


class PolicyDomainError(PosspError):
    """The policy has no entry for a support reached during simulation."""


@dataclass(frozen=True)
class SimStats:
    trials: int
    mean: float
    sd: float
    half_width99: float
    reach_fraction: float
    truncated_fraction: float
    seed: int
    step_cap: int

    def to_dict(self) -> dict:
        return {
            "format": "possp-simstats-v1",
            "trials": self.trials,
            "mean": self.mean,
            "sd": self.sd,
            "half_width99": self.half_width99,
            "reach_fraction": self.reach_fraction,
            "truncated_fraction": self.truncated_fraction,
            "seed": self.seed,
            "step_cap": self.step_cap,
        }


def default_step_cap(u_allow: float) -> int:
    return max(1, math.ceil(100.0 * u_allow))


def simulate(p: Pomdp, policy, trials: int, seed: int, step_cap: int) -> SimStats:
    """Roll out a policy; per-trial generators are seeded seed + trial index.

    Accepts a CompositePolicy or a WinningTable (in which case the uniform
    fallback strategy is played from the start).  Truncated trials keep the
    cost they accrued and are flagged, never dropped.
    """
    if isinstance(policy, CompositePolicy):
        work = policy.pomdp
        fallback = policy.fallback
        horizon = policy.k
        hp = policy.horizon_policy
    elif isinstance(policy, WinningTable):
        work = policy.pomdp
        fallback = policy.sigma_allow
        horizon = 0
        hp = None
    else:
        raise TypeError("policy must be a CompositePolicy or a WinningTable")

    tmask = work.target_mask
    init_items = work.initial.items()
    root = BeliefPoint.from_distribution(work.initial)

    # python-native caches keep the per-step cost low
    is_target = [bool(x) for x in tmask]
    obs_of = [int(z) for z in work.obs_of]
    cost_of = [[float(work.cost[s, a]) for a in range(work.n_actions)]
               for s in range(work.n_states)]
    row_cum: dict = {}
    sup_next: dict = {}
    fb_cum: dict = {}

    def rowc(s: int, a: int):
        key = (s, a)
        hit = row_cum.get(key)
        if hit is None:
            idx, pr = work.row(s, a)
            cum = []
            acc = 0.0
            for q in pr:
                acc += float(q)
                cum.append(acc)
            hit = (list(int(x) for x in idx), cum)
            row_cum[key] = hit
        return hit

    def fallback_joint(s: int, sup):
        """Joint outcome row for one fallback step from (s, sup):
        cumulative probs paired with (cost, next state, next support)."""
        key = (s, sup)
        hit = fb_cum.get(key)
        if hit is None:
            dist = fallback.get(sup)
            if dist is None:
                raise PolicyDomainError(
                    f"fallback undefined at support {tuple(work.states[s] for s in sup)}"
                )
            outcomes = []
            acc = 0.0
            for a in sorted(dist):
                share = dist[a]
                idx, pr = work.row(s, a)
                for s2, p2 in zip(idx, pr):
                    s2 = int(s2)
                    z = obs_of[s2]
                    skey = (sup, a, z)
                    nxt = sup_next.get(skey)
                    if nxt is None:
                        nxt = update_support(work, sup, a, z)
                        sup_next[skey] = nxt
                    acc += share * float(p2)
                    outcomes.append((acc, cost_of[s][a], s2, nxt))
            hit = tuple(outcomes)
            fb_cum[key] = hit
        return hit

    totals = np.empty(trials)
    reached = 0
    truncated = 0
    for i in range(trials):
        gen = np.random.Generator(np.random.PCG64(seed + i))
        buf = gen.random(128)
        pos = 0
        blen = 128
        u = buf[0]
        pos = 1
        acc = 0.0
        s = init_items[-1][0]
        for k, pr in init_items:
            acc += pr
            if u < acc:
                s = k
                break
        belief = root
        sup = root.support
        total = 0.0
        done = is_target[s]
        steps = 0
        while not done and steps < step_cap:
            if steps < horizon:
                a = hp.action(belief, horizon - steps)
                total += cost_of[s][a]
                idx, cum = rowc(s, a)
                if pos >= blen:
                    buf = gen.random(512)
                    blen = 512
                    pos = 0
                u = buf[pos]
                pos += 1
                s = idx[-1]
                for x, c in zip(idx, cum):
                    if u < c:
                        s = x
                        break
                z = obs_of[s]
                steps += 1
                belief = update_point(work, belief, a, z)
                sup = belief.support
            else:
                if pos >= blen:
                    buf = gen.random(512)
                    blen = 512
                    pos = 0
                u = buf[pos]
                pos += 1
                row = fallback_joint(s, sup)
                _, c, s2, nsup = row[-1]
                for cumv, c2, x, nx in row:
                    if u < cumv:
                        c, s2, nsup = c2, x, nx
                        break
                total += c
                s = s2
                sup = nsup
                steps += 1
            if is_target[s]:
                done = True
        totals[i] = total
        if done:
            reached += 1
        else:
            truncated += 1

    mean = float(totals.mean())
    sd = float(totals.std(ddof=1)) if trials > 1 else 0.0
    return SimStats(
        trials=trials,
        mean=mean,
        sd=sd,
        half_width99=Z99 * sd / math.sqrt(trials) if trials > 1 else float("inf"),
        reach_fraction=reached / trials,
        truncated_fraction=truncated / trials,
        seed=seed,
        step_cap=step_cap,
    )

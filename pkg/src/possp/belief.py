"""Belief-support algebra and exact Bayesian belief-point updates."""

from __future__ import annotations

import math

import numpy as np

from .model import Pomdp, PosspError

KEY_DIGITS = 12  # probabilities are rounded this far for key equality only


class BeliefError(PosspError):
    pass


class BeliefPoint:
    """Probability distribution over states with its support cached.

    The canonical key sorts entries by state index and rounds probabilities
    to KEY_DIGITS decimals, so numerically identical beliefs merge while
    distinct ones stay apart.
    """

    __slots__ = ("states", "probs", "key")

    def __init__(self, states, probs):
        order = sorted(range(len(states)), key=lambda i: states[i])
        self.states = tuple(int(states[i]) for i in order)
        self.probs = tuple(float(probs[i]) for i in order)
        self.key = (self.states, tuple(round(p, KEY_DIGITS) for p in self.probs))

    @classmethod
    def from_distribution(cls, dist) -> "BeliefPoint":
        return cls([k for k, _ in dist.items()], [p for _, p in dist.items()])

    @property
    def support(self) -> tuple[int, ...]:
        return self.states

    def mass_on(self, mask: np.ndarray) -> float:
        return math.fsum(p for s, p in zip(self.states, self.probs) if mask[s])

    def __eq__(self, other):
        return isinstance(other, BeliefPoint) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        inner = ", ".join(f"{s}: {p:.6g}" for s, p in zip(self.states, self.probs))
        return f"BeliefPoint({{{inner}}})"


def obs_likelihood(p: Pomdp, b: BeliefPoint, a: int, z: int) -> float:
    """Probability of observing z after playing a in belief b."""
    acc = 0.0
    for s, bs in zip(b.states, b.probs):
        idx, pr = p.row(s, a)
        if idx.size:
            acc += bs * float(pr[p.obs_of[idx] == z].sum())
    return acc


def update_point(p: Pomdp, b: BeliefPoint, a: int, z: int) -> BeliefPoint:
    """Bayes update of b under action a and observation z.

    Raises BeliefError on a zero-likelihood observation.
    """
    num: dict[int, float] = {}
    for s, bs in zip(b.states, b.probs):
        idx, pr = p.row(s, a)
        for s2, p2 in zip(idx, pr):
            if p.obs_of[s2] == z:
                s2 = int(s2)
                num[s2] = num.get(s2, 0.0) + bs * float(p2)
    total = math.fsum(num.values())
    if total <= 0.0:
        raise BeliefError(f"observation {p.observations[z]!r} has zero likelihood")
    states = sorted(num)
    return BeliefPoint(states, [num[s] / total for s in states])


def update_support(p: Pomdp, support: tuple[int, ...], a: int, z: int):
    """Set-level update; returns the new sorted support, or None when empty."""
    out = set()
    for s in support:
        idx, _ = p.row(s, a)
        for s2 in idx:
            if p.obs_of[s2] == z:
                out.add(int(s2))
    return tuple(sorted(out)) if out else None


def successors(p: Pomdp, support: tuple[int, ...], a: int) -> set[tuple[int, ...]]:
    """All nonempty belief-supports reachable from `support` by playing a."""
    by_obs: dict[int, set[int]] = {}
    for s in support:
        idx, _ = p.row(s, a)
        for s2 in idx:
            by_obs.setdefault(int(p.obs_of[s2]), set()).add(int(s2))
    return {tuple(sorted(v)) for v in by_obs.values()}

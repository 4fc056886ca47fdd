"""Core POMDP data model, validation, and normalization transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

PROB_TOL = 1e-9


class PosspError(Exception):
    """Base class for errors raised by this package."""


class ModelError(PosspError):
    """A model violates a structural precondition."""


class CostModeError(PosspError):
    """An operation was asked to approximate a general-integer-cost model."""


class ResourceLimitError(PosspError):
    """A configured node or edge budget was exceeded."""


class Distribution:
    """Sparse probability distribution over integer keys.

    Entries are strictly positive and sum to one within PROB_TOL; the sum is
    renormalized to exactly one at construction, inputs further off than the
    tolerance are rejected.
    """

    __slots__ = ("entries",)

    def __init__(self, mapping: Mapping[int, float] | Iterable[tuple[int, float]]):
        items = mapping.items() if isinstance(mapping, Mapping) else mapping
        pairs = sorted((int(k), float(p)) for k, p in items if p != 0.0)
        if not pairs:
            raise ModelError("empty distribution")
        if any(p < 0.0 for _, p in pairs):
            raise ModelError("negative probability in distribution")
        if len({k for k, _ in pairs}) != len(pairs):
            raise ModelError("duplicate key in distribution")
        total = math.fsum(p for _, p in pairs)
        if abs(total - 1.0) > PROB_TOL:
            raise ModelError(f"distribution mass {total!r} differs from 1 beyond tolerance")
        self.entries: tuple[tuple[int, float], ...] = tuple((k, p / total) for k, p in pairs)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(k for k, _ in self.entries)

    def items(self) -> tuple[tuple[int, float], ...]:
        return self.entries

    def __getitem__(self, key: int) -> float:
        for k, p in self.entries:
            if k == key:
                return p
        return 0.0

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, Distribution) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}: {p:.6g}" for k, p in self.entries)
        return f"Distribution({{{inner}}})"


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    state: int | None = None
    action: int | None = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)


def _index(names: Iterable[str], kind: str) -> dict[str, int]:
    idx: dict[str, int] = {}
    for i, name in enumerate(names):
        if name in idx:
            raise ModelError(f"duplicate {kind} name {name!r}")
        idx[name] = i
    return idx


@dataclass(eq=False)
class Pomdp:
    """Finite POMDP with deterministic state observations and integer costs.

    Transition rows are stored sparsely as parallel index/probability arrays.
    Instances are immutable after construction and safe to share.
    """

    name: str
    states: tuple[str, ...]
    actions: tuple[str, ...]
    observations: tuple[str, ...]
    obs_of: np.ndarray          # (S,) observation index per state
    cost: np.ndarray            # (S, A); int64, or object dtype for rational carriers
    targets: frozenset[int]
    initial: Distribution
    cost_mode: str = "positive"   # "positive" | "general"
    _rows: tuple = field(default=None, repr=False)  # [(idx, pr)] per (s, a)

    def __post_init__(self):
        self.obs_of.setflags(write=False)
        if self.cost.dtype != object:
            self.cost.setflags(write=False)
        members: list[list[int]] = [[] for _ in self.observations]
        for s, z in enumerate(self.obs_of):
            members[int(z)].append(s)
        self._obs_members = tuple(np.asarray(m, dtype=np.int64) for m in members)
        self._is_target = np.zeros(len(self.states), dtype=bool)
        for t in self.targets:
            self._is_target[t] = True
        self._is_target.setflags(write=False)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_parts(
        cls,
        name: str,
        states: Iterable[str],
        actions: Iterable[str],
        observations: Iterable[str],
        trans: Mapping[tuple[str, str], Mapping[str, float]],
        obs: Mapping[str, str],
        initial: Mapping[str, float],
        targets: Iterable[str],
        cost: Mapping[tuple[str, str], object] | None = None,
        cost_mode: str = "positive",
        default_cost: int = 1,
        strict: bool = True,
    ) -> "Pomdp":
        """Build a Pomdp from name-keyed tables.

        With strict=True malformed rows raise; with strict=False they are
        kept raw so that validate() can report them.
        """
        states = tuple(states)
        actions = tuple(actions)
        observations = tuple(observations)
        sidx = _index(states, "state")
        aidx = _index(actions, "action")
        zidx = _index(observations, "observation")
        tgt = frozenset(sidx[t] for t in targets)

        rows: list[list[tuple[np.ndarray, np.ndarray]]] = []
        for s in states:
            per_action = []
            for a in actions:
                row = trans.get((s, a), {})
                succ = sorted((sidx[s2], float(p)) for s2, p in row.items() if p != 0.0)
                idx = np.asarray([k for k, _ in succ], dtype=np.int64)
                pr = np.asarray([p for _, p in succ], dtype=np.float64)
                total = pr.sum()
                if strict:
                    if pr.size and (pr < 0).any():
                        raise ModelError(f"negative transition probability at ({s}, {a})")
                    if abs(total - 1.0) > PROB_TOL:
                        raise ModelError(
                            f"transition row ({s}, {a}) has mass {total!r}, expected 1"
                        )
                    pr = pr / total
                idx.setflags(write=False)
                pr.setflags(write=False)
                per_action.append((idx, pr))
            rows.append(per_action)

        cost = dict(cost or {})
        rational = any(isinstance(v, Fraction) for v in cost.values())
        ctab = np.zeros((len(states), len(actions)), dtype=object if rational else np.int64)
        for s in states:
            for a in actions:
                default = 0 if sidx[s] in tgt else default_cost
                ctab[sidx[s], aidx[a]] = cost.get((s, a), default)

        obs_of = np.asarray([zidx[obs[s]] for s in states], dtype=np.int64)
        init = Distribution({sidx[s]: p for s, p in initial.items()})
        return cls(
            name=name,
            states=states,
            actions=actions,
            observations=observations,
            obs_of=obs_of,
            cost=ctab,
            targets=tgt,
            initial=init,
            cost_mode=cost_mode,
            _rows=tuple(tuple(r) for r in rows),
        )

    # -- accessors ---------------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    def row(self, s: int, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Sparse transition row: (successor indices, probabilities)."""
        return self._rows[s][a]

    def obs_members(self, z: int) -> np.ndarray:
        return self._obs_members[z]

    def is_target(self, s: int) -> bool:
        return bool(self._is_target[s])

    @property
    def target_mask(self) -> np.ndarray:
        return self._is_target

    def state_index(self, name: str) -> int:
        return self.states.index(name)

    def action_index(self, name: str) -> int:
        return self.actions.index(name)


@dataclass(eq=False)
class ObsKernelPomdp:
    """POMDP variant whose observations are emitted probabilistically.

    The kernel maps (landed state, action just played) to a distribution over
    observations. determinize_observations() folds the kernel into the state
    space, yielding an equivalent Pomdp with state-deterministic observations.
    """

    name: str
    states: tuple[str, ...]
    actions: tuple[str, ...]
    observations: tuple[str, ...]
    obs_kernel: dict            # (s, a) -> tuple[(z, prob), ...]
    cost: np.ndarray
    targets: frozenset[int]
    initial: Distribution
    cost_mode: str = "positive"
    _rows: tuple = None

    @classmethod
    def from_parts(cls, name, states, actions, observations, trans, obs_kernel,
                   initial, targets, cost=None, cost_mode="positive", default_cost=1):
        states, observations = tuple(states), tuple(observations)
        base = Pomdp.from_parts(
            name, states, actions, observations, trans,
            obs={s: observations[0] for s in states},  # placeholder map
            initial=initial, targets=targets, cost=cost,
            cost_mode=cost_mode, default_cost=default_cost,
        )
        zidx = {z: i for i, z in enumerate(base.observations)}
        sidx = {s: i for i, s in enumerate(base.states)}
        aidx = {a: i for i, a in enumerate(base.actions)}
        kernel = {}
        for (s, a), row in obs_kernel.items():
            entries = tuple(sorted((zidx[z], float(p)) for z, p in row.items() if p != 0.0))
            kernel[(sidx[s], aidx[a])] = entries
        return cls(
            name=base.name, states=base.states, actions=base.actions,
            observations=base.observations, obs_kernel=kernel, cost=base.cost,
            targets=base.targets, initial=base.initial, cost_mode=base.cost_mode,
            _rows=base._rows,
        )

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_actions(self):
        return len(self.actions)

    def row(self, s: int, a: int):
        return self._rows[s][a]


# -- operations -------------------------------------------------------------


def validate(p: Pomdp) -> ValidationReport:
    """Check every structural invariant; violations are data, not failures."""
    out: list[Violation] = []
    n = p.n_states
    for s in range(n):
        for a in range(p.n_actions):
            idx, pr = p.row(s, a)
            if pr.size and (pr < 0).any():
                out.append(Violation("negative-prob", f"negative probability in row ({p.states[s]}, {p.actions[a]})", s, a))
            mass = float(pr.sum())
            if abs(mass - 1.0) > PROB_TOL:
                out.append(Violation("row-mass", f"row ({p.states[s]}, {p.actions[a]}) mass {mass:.9g} != 1", s, a))
    for t in sorted(p.targets):
        for a in range(p.n_actions):
            idx, pr = p.row(t, a)
            self_mass = float(pr[idx == t].sum()) if idx.size else 0.0
            if abs(self_mass - 1.0) > PROB_TOL:
                out.append(Violation("target-not-absorbing", f"target {p.states[t]} leaves itself under {p.actions[a]}", t, a))
            if p.cost[t, a] != 0:
                out.append(Violation("target-cost-nonzero", f"target {p.states[t]} has cost {p.cost[t, a]} under {p.actions[a]}", t, a))
    if p.cost_mode == "positive":
        for s in range(n):
            if s in p.targets:
                continue
            for a in range(p.n_actions):
                c = p.cost[s, a]
                if not (isinstance(c, (int, np.integer)) and c >= 1):
                    out.append(Violation("cost-not-positive", f"cost({p.states[s]}, {p.actions[a]}) = {c!r} not a positive integer", s, a))
    init_obs = {int(p.obs_of[s]) for s in p.initial.support}
    if len(init_obs) > 1:
        out.append(Violation("initial-obs-mixed", "initial support spans several observations"))
    return ValidationReport(tuple(out))


def determinize_observations(kp: ObsKernelPomdp) -> Pomdp:
    """Fold a probabilistic observation kernel into the state space.

    Output states are (state, observation) pairs; the transition law becomes
    delta'((s,z),a)((s',z')) = delta(s,a)(s') * O(s',a)(z').  Targets keep a
    self-loop (their kernel column is irrelevant: post-target behavior is
    cost-free), costs and target membership are lifted from the first
    coordinate, and the initial distribution is placed on the z=0 copies.
    """
    nz = len(kp.observations)
    for s in range(kp.n_states):
        for a in range(kp.n_actions):
            row = kp.obs_kernel.get((s, a))
            if row is None:
                raise ModelError(f"missing observation kernel row for ({kp.states[s]}, {kp.actions[a]})")
            mass = math.fsum(pr for _, pr in row)
            if abs(mass - 1.0) > PROB_TOL:
                raise ModelError(
                    f"observation kernel row ({kp.states[s]}, {kp.actions[a]}) has mass {mass:.9g}"
                )

    pair = lambda s, z: s * nz + z
    states = tuple(f"{s}@{z}" for s in kp.states for z in kp.observations)
    trans: dict[tuple[str, str], dict[str, float]] = {}
    cost: dict[tuple[str, str], object] = {}
    for s in range(kp.n_states):
        for z in range(nz):
            src = states[pair(s, z)]
            for a, aname in enumerate(kp.actions):
                cost[(src, aname)] = kp.cost[s, a]
                if s in kp.targets:
                    trans[(src, aname)] = {src: 1.0}
                    continue
                idx, pr = kp.row(s, a)
                row: dict[str, float] = {}
                for s2, p2 in zip(idx, pr):
                    for z2, pz in kp.obs_kernel[(int(s2), a)]:
                        dst = states[pair(int(s2), z2)]
                        row[dst] = row.get(dst, 0.0) + float(p2) * pz
                trans[(src, aname)] = row
    obs = {states[pair(s, z)]: kp.observations[z] for s in range(kp.n_states) for z in range(nz)}
    initial = {states[pair(s, 0)]: pr for s, pr in kp.initial.items()}
    targets = [states[pair(t, z)] for t in sorted(kp.targets) for z in range(nz)]
    return Pomdp.from_parts(
        name=kp.name + "+obs",
        states=states,
        actions=kp.actions,
        observations=kp.observations,
        trans=trans,
        obs=obs,
        initial=initial,
        targets=targets,
        cost=cost,
        cost_mode=kp.cost_mode,
    )


def observe_targets(p: Pomdp, obs_name: str = "target-reached") -> Pomdp:
    """Remap every target state to one fresh, target-only observation.

    Since targets are absorbing and cost-free this changes neither reach
    probabilities nor expected totals of any strategy; it only separates
    target supports from non-target supports.  Observations left without any
    state are dropped.
    """
    for t in sorted(p.targets):
        for a in range(p.n_actions):
            idx, pr = p.row(t, a)
            self_mass = float(pr[idx == t].sum()) if idx.size else 0.0
            if abs(self_mass - 1.0) > PROB_TOL or p.cost[t, a] != 0:
                raise ModelError(f"target {p.states[t]} is not absorbing with zero cost")
    while obs_name in p.observations:
        obs_name += "'"
    keep = sorted({int(p.obs_of[s]) for s in range(p.n_states) if s not in p.targets})
    new_obs = tuple(p.observations[z] for z in keep) + (obs_name,)
    remap = {z: i for i, z in enumerate(keep)}
    fresh = len(keep)
    obs_of = np.asarray(
        [fresh if s in p.targets else remap[int(p.obs_of[s])] for s in range(p.n_states)],
        dtype=np.int64,
    )
    return Pomdp(
        name=p.name,
        states=p.states,
        actions=p.actions,
        observations=new_obs,
        obs_of=obs_of,
        cost=p.cost,
        targets=p.targets,
        initial=p.initial,
        cost_mode=p.cost_mode,
        _rows=p._rows,
    )


def scale_costs(p: Pomdp) -> Pomdp:
    """Clear rational costs by the least common multiple of all denominators."""
    fracs = [Fraction(c) for c in p.cost.flat]
    scale = 1
    for f in fracs:
        scale = scale * f.denominator // math.gcd(scale, f.denominator)
    scaled = np.asarray(
        [int(f * scale) for f in fracs], dtype=np.int64
    ).reshape(p.cost.shape)
    return Pomdp(
        name=p.name,
        states=p.states,
        actions=p.actions,
        observations=p.observations,
        obs_of=p.obs_of,
        cost=scaled,
        targets=p.targets,
        initial=p.initial,
        cost_mode=p.cost_mode,
        _rows=p._rows,
    )

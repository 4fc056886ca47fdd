"""Programmatic POMDP families, the PFA reduction, and exact word evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .model import ModelError, ObsKernelPomdp, Pomdp, PROB_TOL

# ---------------------------------------------------------------------------
# probabilistic finite automata


@dataclass(frozen=True)
class Pfa:
    """PFA with an implicit absorbing reject sink for unspecified rows."""

    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    delta: Mapping            # (state, letter) -> {state: prob}
    final: frozenset
    start: str

    def __post_init__(self):
        for (s, a), row in self.delta.items():
            if s not in self.states:
                raise ModelError(f"unknown PFA state {s!r}")
            if a not in self.alphabet:
                raise ModelError(f"unknown PFA letter {a!r}")
            mass = math.fsum(row.values())
            if abs(mass - 1.0) > PROB_TOL:
                raise ModelError(f"PFA row ({s}, {a}) has mass {mass!r}")

    @classmethod
    def make(cls, states, alphabet, delta, final, start) -> "Pfa":
        return cls(tuple(states), tuple(alphabet), dict(delta),
                   frozenset(final), start)


def pfa_accept(pfa: Pfa, word: Iterable[str]) -> float:
    """Mass on the final states after reading the word (reject sink absorbs)."""
    dist = {pfa.start: 1.0}
    for letter in word:
        if letter not in pfa.alphabet:
            raise ValueError(f"letter {letter!r} outside the PFA alphabet")
        nxt: dict[str, float] = {}
        for s, m in dist.items():
            row = pfa.delta.get((s, letter))
            if row is None:
                continue
            for s2, pr in row.items():
                nxt[s2] = nxt.get(s2, 0.0) + m * pr
        dist = nxt
    return math.fsum(m for s, m in dist.items() if s in pfa.final)


def pfa_fig_example() -> Pfa:
    """Two-state PFA accepting with probability one on the word 'a'."""
    return Pfa.make(
        states=["s0", "s"],
        alphabet=["a", "b"],
        delta={("s0", "a"): {"s": 1.0}, ("s", "b"): {"s": 1.0}},
        final=["s"],
        start="s0",
    )


def pfa_half() -> Pfa:
    """PFA accepting the word 'a' with probability exactly one half."""
    return Pfa.make(
        states=["s0", "f"],
        alphabet=["a"],
        delta={("s0", "a"): {"f": 0.5, "s0": 0.5}},
        final=["f"],
        start="s0",
    )


# ---------------------------------------------------------------------------
# small fixed models


def gen_toy() -> Pomdp:
    """Three-state model: one risky and one safe route to the goal."""
    trans = {
        ("s0", "risky"): {"goal": 0.5, "trap": 0.5},
        ("s0", "safe"): {"goal": 0.5, "s0": 0.5},
        ("goal", "risky"): {"goal": 1.0},
        ("goal", "safe"): {"goal": 1.0},
        ("trap", "risky"): {"trap": 1.0},
        ("trap", "safe"): {"trap": 1.0},
    }
    return Pomdp.from_parts(
        name="toy",
        states=["s0", "goal", "trap"],
        actions=["risky", "safe"],
        observations=["start", "goal-seen", "trap-seen"],
        trans=trans,
        obs={"s0": "start", "goal": "goal-seen", "trap": "trap-seen"},
        initial={"s0": 1.0},
        targets=["goal"],
    )


def _first_primes(n: int) -> list[int]:
    primes: list[int] = []
    c = 2
    while len(primes) < n:
        if all(c % q for q in primes):
            primes.append(c)
        c += 1
    return primes


def gen_lower_bound(n: int) -> Pomdp:
    """Family of prime-length loops whose solution cost grows doubly fast.

    One sub-loop per prime p(i).  Advancing inside a loop restarts with
    probability one half; the jump action only pays off at the last loop
    state, which the controller can pin down only modulo every prime at
    once.  All loop states look alike.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    primes = _first_primes(n)
    states = ["s0", "bad", "goal"]
    obs = {"s0": "start", "bad": "dead", "goal": "done"}
    trans: dict = {}
    loop_names: list[list[str]] = []
    for i, p in enumerate(primes, start=1):
        cells = [f"q{i}_{j}" for j in range(1, p + 1)]
        loop_names.append(cells)
        states.extend(cells)
        for c in cells:
            obs[c] = "loop"
    trans[("s0", "a")] = {"bad": 1.0}
    trans[("s0", "#")] = {cells[0]: 1.0 / n for cells in loop_names}
    for cells in loop_names:
        p = len(cells)
        for j, c in enumerate(cells):
            trans[(c, "a")] = {cells[(j + 1) % p]: 0.5, "s0": 0.5}
            if j == p - 1:
                trans[(c, "#")] = {"goal": 0.5, "s0": 0.5}
            else:
                trans[(c, "#")] = {"bad": 1.0}
    for a in ("a", "#"):
        trans[("bad", a)] = {"bad": 1.0}
        trans[("goal", a)] = {"goal": 1.0}
    return Pomdp.from_parts(
        name=f"lower-bound-{n}",
        states=states,
        actions=["a", "#"],
        observations=["start", "dead", "done", "loop"],
        trans=trans,
        obs=obs,
        initial={"s0": 1.0},
        targets=["goal"],
    )


# ---------------------------------------------------------------------------
# PFA reduction and open-loop word evaluation


def gen_reduction(pfa: Pfa) -> Pomdp:
    """Blind POMDP whose optimal cost is -infinity iff some word is accepted
    with probability above one half.

    States come in (+/-) pairs per PFA state; a shift action moves from the
    plus to the minus copy, letters run the PFA from minus copies back to
    plus copies, and a membership test routes to a reward or penalty state
    depending on finality.  Unavailable actions fall into a losing sink.
    Costs are general integers, so the result is stored and word-evaluated
    but never handed to the approximation driver.
    """
    plus = {s: f"{s}+" for s in pfa.states}
    minus = {s: f"{s}-" for s in pfa.states}
    states = [plus[s] for s in pfa.states] + [minus[s] for s in pfa.states]
    states += ["good", "bad", "target", "lose"]
    actions = list(pfa.alphabet) + ["$", "#", "!"]
    trans: dict = {}
    cost: dict = {}
    start_plus = plus[pfa.start]

    def lose(src: str, act: str):
        trans[(src, act)] = {"lose": 1.0}

    for s in pfa.states:
        sp, sm = plus[s], minus[s]
        for act in actions:
            cost[(sp, act)] = 1
            cost[(sm, act)] = -1
        cost[(sp, "#")] = 0
        trans[(sp, "$")] = {sm: 1.0}
        trans[(sp, "#")] = {"good" if s in pfa.final else "bad": 1.0}
        for letter in pfa.alphabet:
            lose(sp, letter)
            row = pfa.delta.get((s, letter))
            if row is None:
                lose(sm, letter)
            else:
                trans[(sm, letter)] = {plus[s2]: pr for s2, pr in row.items()}
                short = 1.0 - math.fsum(row.values())
                if short > PROB_TOL:
                    trans[(sm, letter)]["lose"] = short
        trans[(sm, "#")] = {"good" if s in pfa.final else "bad": 1.0}
        lose(sm, "$")
        lose(sm, "!")
        if sp == start_plus:
            trans[(sp, "!")] = {"target": 1.0}
        else:
            lose(sp, "!")
    for hub, c in (("good", -1), ("bad", 1)):
        for act in actions:
            cost[(hub, act)] = c
            lose(hub, act)
        trans[(hub, "#")] = {start_plus: 1.0}
    for act in actions:
        trans[("target", act)] = {"target": 1.0}
        trans[("lose", act)] = {"lose": 1.0}
        cost[("target", act)] = 0
        cost[("lose", act)] = 1
    return Pomdp.from_parts(
        name="pfa-reduction",
        states=states,
        actions=actions,
        observations=["o"],
        trans=trans,
        obs={s: "o" for s in states},
        initial={start_plus: 1.0},
        targets=["target"],
        cost=cost,
        cost_mode="general",
    )


def reduction_word(word: Iterable[str], k: int) -> list[str]:
    """The canonical open-loop strategy: k test rounds on `word`, then stop."""
    block: list[str] = []
    for letter in word:
        block += ["$", letter]
    block += ["#", "#"]
    return block * k + ["!"]


def eval_word(p: Pomdp, word: Iterable[str]) -> float:
    """Exact expected total cost of playing a fixed action word.

    Only defined for models whose non-target states share one observation,
    so an open-loop word is a complete strategy.  Costs accrued in the
    losing sink count like any other.
    """
    non_target_obs = {int(p.obs_of[s]) for s in range(p.n_states) if s not in p.targets}
    if len(non_target_obs) > 1:
        raise ModelError("word evaluation needs a single pre-target observation class")
    aidx = {a: i for i, a in enumerate(p.actions)}
    dist = {s: pr for s, pr in p.initial.items()}
    total = 0.0
    for letter in word:
        if letter not in aidx:
            raise ValueError(f"action {letter!r} not in the model alphabet")
        a = aidx[letter]
        total += math.fsum(m * float(p.cost[s, a]) for s, m in sorted(dist.items()))
        nxt: dict[int, float] = {}
        for s, m in sorted(dist.items()):
            idx, pr = p.row(s, a)
            for s2, p2 in zip(idx, pr):
                s2 = int(s2)
                nxt[s2] = nxt.get(s2, 0.0) + m * float(p2)
        dist = nxt
    return total


# ---------------------------------------------------------------------------
# benchmark families


_DIRS = {"n": (-1, 0), "e": (0, 1), "s": (1, 0), "w": (0, -1)}


def gen_grid(costs: str = "unit") -> Pomdp:
    """Four-by-three maze with one blocked cell, slippery moves, and side
    detectors that only sense walls to the east and west."""
    if costs not in ("unit", "weighted"):
        raise ValueError("costs must be 'unit' or 'weighted'")
    layout = [
        [0, 1, 2, 3],
        [4, None, 5, 6],
        [7, 8, 9, 10],
    ]
    pos = {}
    for r, row in enumerate(layout):
        for c, v in enumerate(row):
            if v is not None:
                pos[v] = (r, c)
    cells = sorted(pos)
    goal, trap = 3, 10

    def step(cell: int, d: str) -> int:
        r, c = pos[cell]
        dr, dc = _DIRS[d]
        r2, c2 = r + dr, c + dc
        for v, rc in pos.items():
            if rc == (r2, c2):
                return v
        return cell

    perp = {"n": ("e", "w"), "s": ("e", "w"), "e": ("n", "s"), "w": ("n", "s")}
    trans: dict = {}
    for cell in cells:
        for d in _DIRS:
            if cell in (goal, trap):
                trans[(str(cell), d)] = {str(cell): 1.0}
                continue
            row: dict[str, float] = {}
            for tgt, pr in [(step(cell, d), 0.96),
                            (step(cell, perp[d][0]), 0.02),
                            (step(cell, perp[d][1]), 0.02)]:
                row[str(tgt)] = row.get(str(tgt), 0.0) + pr
            trans[(str(cell), d)] = row

    def wall(cell: int, d: str) -> bool:
        return step(cell, d) == cell

    obs = {}
    for cell in cells:
        if cell == goal:
            obs[str(cell)] = "goal"
        elif cell == trap:
            obs[str(cell)] = "trap"
        else:
            obs[str(cell)] = f"e{int(wall(cell, 'e'))}w{int(wall(cell, 'w'))}"
    obs_names = sorted(set(obs.values()))
    cost = {}
    if costs == "weighted":
        narrow = {0, 1, 4, 7, 8}
        for cell in cells:
            if cell == goal:
                continue
            for d in _DIRS:
                cost[(str(cell), d)] = 2 if cell in narrow else 1
    return Pomdp.from_parts(
        name=f"grid-{costs}",
        states=[str(c) for c in cells],
        actions=["n", "e", "s", "w"],
        observations=obs_names,
        trans=trans,
        obs=obs,
        initial={"0": 1.0},
        targets=[str(goal)],
        cost=cost or None,
    )


def _maze_pomdp(name: str, baseline: int, arms: dict, goal_arm: int,
                start_cells: list[int], weighted: bool) -> Pomdp:
    """Comb-shaped maze: a baseline corridor with two-cell arms hanging below.

    arms maps baseline positions to (mid cell id, bottom cell id); the bottom
    of goal_arm is the target, every other bottom is an absorbing trap.
    """
    cell_of = {}
    for b in range(baseline):
        cell_of[b] = ("base", b)
    for b, (mid, bot) in arms.items():
        cell_of[mid] = ("mid", b)
        cell_of[bot] = ("bot", b)
    names = {c: str(c) for c in cell_of}
    goal = arms[goal_arm][1]
    traps = {bot for b, (_, bot) in arms.items() if b != goal_arm}

    def move(cell: int, d: str) -> int:
        kind, b = cell_of[cell]
        if kind == "base":
            if d == "e" and b + 1 < baseline:
                return b + 1
            if d == "w" and b - 1 >= 0:
                return b - 1
            if d == "s" and b in arms:
                return arms[b][0]
            return cell
        if kind == "mid":
            if d == "n":
                return b
            if d == "s":
                return arms[b][1]
            return cell
        return cell  # bottoms are absorbing

    trans: dict = {}
    cost: dict = {}
    states = [names[c] for c in sorted(cell_of)] + ["init"]
    for cell in sorted(cell_of):
        for d in _DIRS:
            trans[(names[cell], d)] = {names[move(cell, d)]: 1.0}
            if weighted and cell_of[cell][0] == "base":
                cost[(names[cell], d)] = 2
    for d in _DIRS:
        trans[("init", d)] = {names[c]: 1.0 / len(start_cells) for c in start_cells}

    obs = {"init": "init"}
    for cell in sorted(cell_of):
        kind, b = cell_of[cell]
        if cell == goal:
            obs[names[cell]] = "goal"
        elif cell in traps:
            obs[names[cell]] = "trap"
        elif kind == "mid":
            obs[names[cell]] = "ew"
        else:
            walls = "n"
            if b not in arms:
                walls += "s"
            if b == 0:
                walls += "w"
            if b == baseline - 1:
                walls += "e"
            obs[names[cell]] = walls
    return Pomdp.from_parts(
        name=name,
        states=states,
        actions=["n", "e", "s", "w"],
        observations=sorted(set(obs.values())),
        trans=trans,
        obs=obs,
        initial={"init": 1.0},
        targets=[names[goal]],
        cost=cost or None,
    )


def gen_cheese(size: str = "small", costs: str = "unit") -> Pomdp:
    """Comb maze with hidden arms; the weighted variant makes every move on
    the baseline cost 2.

    Small: five baseline cells, arms under 0/2/4, the goal below 2.  Large:
    seven baseline cells, a fourth (trap) arm at the left end, the goal
    below 4, and the start spread over the five middle cells.
    """
    if size == "small":
        return _maze_pomdp(
            name=f"cheese-small-{costs}", baseline=5,
            arms={0: (5, 8), 2: (6, 9), 4: (7, 10)},
            goal_arm=2, start_cells=[0, 1, 2, 3, 4],
            weighted=costs == "weighted",
        )
    if size == "large":
        return _maze_pomdp(
            name=f"cheese-large-{costs}", baseline=7,
            arms={0: (7, 11), 2: (8, 12), 4: (9, 13), 6: (10, 14)},
            goal_arm=4, start_cells=[1, 2, 3, 4, 5],
            weighted=costs == "weighted",
        )
    raise ValueError("size must be 'small' or 'large'")


_HEADINGS = ("n", "e", "s", "w")
_LEFT = {"n": "w", "w": "s", "s": "e", "e": "n"}
_RIGHT = {v: k for k, v in _LEFT.items()}
_BACK = {"n": "s", "s": "n", "e": "w", "w": "e"}


def gen_robot(variant: str = "det", costs: str = "unit") -> Pomdp:
    """Turn-and-advance robot on an S-shaped course; wall bumps wreck it.

    Cells: 1 on top, 2 below it, 3 to the right of 2, the goal below 3.
    The randomized variant makes every action a no-op with probability 0.04.
    The weighted cost variant charges 2 per turn and 1 per forward move.
    """
    if variant not in ("det", "ran"):
        raise ValueError("variant must be 'det' or 'ran'")
    cells = {"1": (0, 0), "2": (1, 0), "3": (1, 1), "G": (2, 1)}
    open_dirs = {
        "1": {"s": "2"},
        "2": {"n": "1", "e": "3"},
        "3": {"w": "2", "s": "G"},
    }
    slip = 0.04 if variant == "ran" else 0.0

    def pose(c: str, h: str) -> str:
        return f"p{c}{h}"

    states = [pose(c, h) for c in ("1", "2", "3") for h in _HEADINGS]
    states += ["goal", "crash", "init"]
    trans: dict = {}
    cost: dict = {}
    weighted = costs == "weighted"

    def add(src: str, act: str, dst: str):
        row = {dst: 1.0 - slip} if dst != src else {src: 1.0}
        if slip and dst != src:
            row[src] = row.get(src, 0.0) + slip
        trans[(src, act)] = row

    for c in ("1", "2", "3"):
        for h in _HEADINGS:
            src = pose(c, h)
            front = open_dirs[c].get(h)
            if front == "G":
                add(src, "f", "goal")
            elif front is not None:
                add(src, "f", pose(front, h))
            else:
                add(src, "f", "crash")
            add(src, "l", pose(c, _LEFT[h]))
            add(src, "r", pose(c, _RIGHT[h]))
            if weighted:
                cost[(src, "f")] = 1
                cost[(src, "l")] = 2
                cost[(src, "r")] = 2
    for act in ("f", "l", "r"):
        trans[("goal", act)] = {"goal": 1.0}
        trans[("crash", act)] = {"crash": 1.0}
        trans[("init", act)] = {pose("1", h): 0.25 for h in _HEADINGS}
        if weighted:
            cost[("init", act)] = 1 if act == "f" else 2
            cost[("crash", act)] = 1 if act == "f" else 2

    def view(c: str, h: str) -> str:
        bits = []
        for d in (h, _LEFT[h], _RIGHT[h], _BACK[h]):
            bits.append("1" if d in open_dirs[c] else "0")
        return "v" + "".join(bits)

    obs = {"goal": "goal", "crash": "crash", "init": "init"}
    for c in ("1", "2", "3"):
        for h in _HEADINGS:
            obs[pose(c, h)] = view(c, h)
    return Pomdp.from_parts(
        name=f"robot-{variant}-{costs}",
        states=states,
        actions=["f", "l", "r"],
        observations=sorted(set(obs.values())),
        trans=trans,
        obs=obs,
        initial={"init": 1.0},
        targets=["goal"],
        cost=cost or None,
    )


def gen_rocksample(n: int, k: int, d0: float = 20.0) -> ObsKernelPomdp:
    """Rover science exploration on an n-by-n map with k rocks.

    Returns the raw model with a probabilistic observation kernel (two
    readings; check accuracy decays exponentially with distance over d0).
    Solving pipelines determinize it first.  Rock positions are a fixed
    pseudo-random layout derived from (n, k).
    """
    rng = np.random.Generator(np.random.PCG64(10_000 * n + k))
    cells = [(x, y) for x in range(n) for y in range(n)]
    order = rng.permutation(len(cells))
    rocks = [cells[i] for i in order[:k]]
    start = (0, n // 2)

    def sname(x: int, y: int, mask: int) -> str:
        return f"x{x}y{y}m{mask}"

    states = [sname(x, y, m) for x in range(n) for y in range(n) for m in range(2 ** k)]
    states.append("done")
    moves = {"N": (0, -1), "S": (0, 1), "E": (1, 0), "W": (-1, 0)}
    actions = ["N", "S", "E", "W", "sample"] + [f"check{i + 1}" for i in range(k)]
    rock_at = {}
    for i, xy in enumerate(rocks):
        rock_at.setdefault(xy, []).append(i)

    trans: dict = {}
    cost: dict = {}
    kernel: dict = {}
    null_obs = {"bad": 1.0}
    for x in range(n):
        for y in range(n):
            for m in range(2 ** k):
                src = sname(x, y, m)
                for a, (dx, dy) in moves.items():
                    x2, y2 = x + dx, y + dy
                    if a == "E" and x2 == n:
                        trans[(src, a)] = {"done": 1.0}
                        cost[(src, a)] = 50
                    elif 0 <= x2 < n and 0 <= y2 < n:
                        trans[(src, a)] = {sname(x2, y2, m): 1.0}
                        cost[(src, a)] = 50
                    else:
                        trans[(src, a)] = {src: 1.0}
                        cost[(src, a)] = 100
                    kernel[(src, a)] = null_obs
                here = rock_at.get((x, y), [])
                good_here = [i for i in here if m & (1 << i)]
                if good_here:
                    m2 = m
                    for i in good_here:
                        m2 &= ~(1 << i)
                    trans[(src, "sample")] = {sname(x, y, m2): 1.0}
                    cost[(src, "sample")] = 1
                else:
                    trans[(src, "sample")] = {src: 1.0}
                    cost[(src, "sample")] = 50
                kernel[(src, "sample")] = null_obs
                for i in range(k):
                    act = f"check{i + 1}"
                    trans[(src, act)] = {src: 1.0}
                    cost[(src, act)] = 1
                    rx, ry = rocks[i]
                    dist = math.hypot(x - rx, y - ry)
                    eta = 2.0 ** (-dist / d0)
                    p_correct = 0.5 * (1.0 + eta)
                    truth = "good" if m & (1 << i) else "bad"
                    other = "bad" if truth == "good" else "good"
                    kernel[(src, act)] = {truth: p_correct, other: 1.0 - p_correct}
    for a in actions:
        trans[("done", a)] = {"done": 1.0}
        cost[("done", a)] = 0
        kernel[("done", a)] = null_obs

    initial = {sname(*start, m): 1.0 / 2 ** k for m in range(2 ** k)}
    return ObsKernelPomdp.from_parts(
        name=f"rocksample-{n}-{k}",
        states=states,
        actions=actions,
        observations=["good", "bad"],
        trans=trans,
        obs_kernel=kernel,
        initial=initial,
        targets=["done"],
        cost=cost,
    )

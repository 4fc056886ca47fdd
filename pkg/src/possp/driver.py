"""Iterative-horizon approximation loop with certified stopping."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from . import __version__ as _version
from .bound import build_chain, hitting_bound
from .horizon import (
    DiscretizedPolicy,
    FiniteHorizonPolicy,
    LayeredBeliefDag,
    exact_vi,
    rtdp_backend,
)
from .model import (
    CostModeError,
    ModelError,
    ObsKernelPomdp,
    Pomdp,
    determinize_observations,
    observe_targets,
    validate,
)
from .winning import almost_sure_winning, build_support_mdp


@dataclass(eq=False)
class CompositePolicy:
    """Optimal k-step strategy chained to the uniform fallback afterwards."""

    pomdp: Pomdp                      # targets-observable working model
    horizon_policy: object            # FiniteHorizonPolicy | DiscretizedPolicy
    fallback: dict                    # support -> {action: prob}
    k: int
    depth_k_supports: tuple = ()

    @property
    def exact(self) -> bool:
        return getattr(self.horizon_policy, "exact", True)


@dataclass(frozen=True)
class Iteration:
    k: int
    t_k: float
    alpha_k: float
    bound_k: float
    seconds: float


@dataclass(eq=False)
class SolveReport:
    mode: str
    epsilon: float
    backend: str
    feasible: bool
    converged: bool
    u_allow: float | None = None
    iterations: tuple = ()
    final_k: int | None = None
    interval: tuple | None = None      # [T_k, T_k + alpha_k * U]; exact backend only
    interval_kind: str | None = None   # "certified" | "estimate"
    config: dict = field(default_factory=dict)
    version: str = _version

    def to_dict(self) -> dict:
        return {
            "format": "possp-report-v1",
            "version": self.version,
            "mode": self.mode,
            "epsilon": self.epsilon,
            "backend": self.backend,
            "feasible": self.feasible,
            "converged": self.converged,
            "u_allow": self.u_allow,
            "final_k": self.final_k,
            "interval": list(self.interval) if self.interval else None,
            "interval_kind": self.interval_kind,
            "iterations": [
                {"k": it.k, "t_k": it.t_k, "alpha_k": it.alpha_k,
                 "bound_k": it.bound_k, "seconds": it.seconds}
                for it in self.iterations
            ],
            "config": self.config,
        }


def _prepare(p) -> Pomdp:
    if isinstance(p, ObsKernelPomdp):
        p = determinize_observations(p)
    report = validate(p)
    if not report.ok:
        first = report.violations[0]
        raise ModelError(f"invalid model ({len(report)} violations), e.g. {first.message}")
    return observe_targets(p)


def approximate(
    p,
    epsilon: float,
    mode: str = "additive",
    backend: str = "exact",
    max_horizon: int | None = None,
    time_limit: float | None = None,
    geometric: bool = False,
    rtdp_discretization: int = 100,
    rtdp_trials: int = 10_000,
    seed: int = 0,
    node_budget: int | None = None,
    edge_budget: int | None = None,
):
    """Approximate the optimal expected total cost within epsilon.

    Returns (CompositePolicy | None, SolveReport).  The policy is None only
    when no almost-sure winning strategy exists from the initial support.
    With the exact backend the report's interval is certified: T_k lower
    bounds the optimum and the returned strategy's value is at most the
    interval's upper end.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if mode not in ("additive", "multiplicative"):
        raise ValueError(f"unknown mode {mode!r}")
    if backend not in ("exact", "rtdp"):
        raise ValueError(f"unknown backend {backend!r}")
    if p.cost_mode != "positive":
        raise CostModeError(
            "approximation is undecidable for general integer costs;"
            " only positive cost models are accepted"
        )
    config = {
        "model": p.name, "epsilon": epsilon, "mode": mode, "backend": backend,
        "max_horizon": max_horizon, "time_limit": time_limit, "geometric": geometric,
        "rtdp_discretization": rtdp_discretization, "rtdp_trials": rtdp_trials,
        "seed": seed,
    }
    work = _prepare(p)
    kwargs = {} if edge_budget is None else {"edge_budget": edge_budget}
    mdp = build_support_mdp(work, **kwargs)
    table = almost_sure_winning(mdp)
    if not table.initial_winning:
        report = SolveReport(mode=mode, epsilon=epsilon, backend=backend,
                             feasible=False, converged=False, config=config)
        return None, report

    chain = build_chain(work, table)
    u_allow = hitting_bound(chain).u_allow
    cap = max(1, math.ceil(u_allow * u_allow / epsilon))

    dag = None
    if backend == "exact":
        dag = LayeredBeliefDag(
            work, table,
            **({} if node_budget is None else {"node_budget": node_budget}),
        )

    start = time.perf_counter()
    iterations: list[Iteration] = []
    best = None
    converged = False
    k = 1
    while True:
        t0 = time.perf_counter()
        if backend == "exact":
            res = exact_vi(work, table, k, dag=dag)
        else:
            res = rtdp_backend(work, table, k, discretization=rtdp_discretization,
                               trials=rtdp_trials, seed=seed)
        bound_k = res.t_k + res.alpha_k * u_allow
        iterations.append(Iteration(k=k, t_k=res.t_k, alpha_k=res.alpha_k,
                                    bound_k=bound_k, seconds=time.perf_counter() - t0))
        best = res
        if mode == "additive":
            stop = res.alpha_k * u_allow <= epsilon
        else:
            stop = res.alpha_k * u_allow <= res.t_k * epsilon
        if stop:
            converged = True
            break
        if max_horizon is not None and k >= max_horizon:
            break
        if time_limit is not None and time.perf_counter() - start > time_limit:
            break
        if k >= cap:
            break
        k = min(2 * k, cap) if geometric else k + 1
        if max_horizon is not None:
            k = min(k, max_horizon)

    depth_supports = ()
    if dag is not None and len(dag.layers) > best.policy.horizon:
        depth_supports = tuple(sorted({
            b.support for b in dag.layers[best.policy.horizon].values()
        }))
    policy = CompositePolicy(
        pomdp=work,
        horizon_policy=best.policy,
        fallback=table.sigma_allow,
        k=best.policy.horizon,
        depth_k_supports=depth_supports,
    )
    exact = backend == "exact"
    last = iterations[-1]
    report = SolveReport(
        mode=mode, epsilon=epsilon, backend=backend,
        feasible=True, converged=converged,
        u_allow=u_allow,
        iterations=tuple(iterations),
        final_k=last.k,
        interval=(last.t_k, last.bound_k),
        interval_kind="certified" if exact else "estimate",
        config=config,
    )
    return policy, report


# -- policy serialization ----------------------------------------------------


def export_policy(cp: CompositePolicy) -> dict:
    """Serialize a composite policy; import_policy round-trips the result."""
    p = cp.pomdp
    for sup in cp.depth_k_supports:
        if sup not in cp.fallback:
            raise ModelError(f"fallback undefined on reachable support {sup}")
    doc = {
        "format": "possp-policy-v1",
        "model": p.name,
        "k": cp.k,
        "fallback": [
            {"support": [p.states[s] for s in sup],
             "dist": {p.actions[a]: pr for a, pr in dist.items()}}
            for sup, dist in sorted(cp.fallback.items())
        ],
    }
    hp = cp.horizon_policy
    if isinstance(hp, FiniteHorizonPolicy):
        doc["horizon_kind"] = "exact"
        doc["finite_horizon"] = [
            {
                "states": [p.states[s] for s in key[0]],
                "probs": list(key[1]),
                "remaining": n,
                "action": p.actions[a],
            }
            for (key, n), a in sorted(hp.table.items())
        ]
    else:
        doc["horizon_kind"] = "discretized"
        doc["discretization"] = hp.discretization
        doc["values"] = [
            {
                "states": [p.states[s] for s in key[0]],
                "counts": list(key[1]),
                "remaining": n,
                "value": v,
            }
            for (key, n), v in sorted(hp.values.items())
        ]
    return doc


def import_policy(doc: dict, p) -> CompositePolicy:
    """Rebuild a composite policy against the model it was exported from."""
    if doc.get("format") != "possp-policy-v1":
        raise ModelError("not a policy document")
    work = _prepare(p)
    sidx = {s: i for i, s in enumerate(work.states)}
    aidx = {a: i for i, a in enumerate(work.actions)}
    fallback = {
        tuple(sorted(sidx[s] for s in entry["support"])): {
            aidx[a]: pr for a, pr in entry["dist"].items()
        }
        for entry in doc["fallback"]
    }
    k = doc["k"]
    if doc["horizon_kind"] == "exact":
        table = {}
        for entry in doc["finite_horizon"]:
            key = (tuple(sidx[s] for s in entry["states"]),
                   tuple(float(x) for x in entry["probs"]))
            table[(key, entry["remaining"])] = aidx[entry["action"]]
        hp = FiniteHorizonPolicy(horizon=k, table=table, values={}, exact=True)
    else:
        mdp = build_support_mdp(work)
        w = almost_sure_winning(mdp)
        values = {}
        for entry in doc["values"]:
            key = (tuple(sidx[s] for s in entry["states"]),
                   tuple(int(c) for c in entry["counts"]))
            values[(key, entry["remaining"])] = float(entry["value"])
        hp = DiscretizedPolicy(horizon=k, pomdp=work, winning=w,
                               discretization=doc["discretization"], values=values)
    return CompositePolicy(pomdp=work, horizon_policy=hp, fallback=fallback, k=k)

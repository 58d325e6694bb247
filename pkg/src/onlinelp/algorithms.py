"""The online algorithms: one-pass subgradient variants, per-step-LP baselines,
and the randomized feasibility repair post-processor.

Every run consumes the columns of one instance in storage order (callers
permute beforehand when arrival order should be random) and emits a
:class:`~onlinelp.core.RunTrace`.  Runs are bit-deterministic given the
instance bytes, the configuration, and the seed.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    DualState,
    Instance,
    MultiInstance,
    RunTrace,
    StepSchedule,
    compute_stats,
    threshold_decision,
)
from .simplex import DEFAULT_FEAS_TOL, DEFAULT_PIVOT_TOL, LpStatus, SimplexError, solve_scaled

__all__ = [
    "AlgorithmKind",
    "AlgorithmConfig",
    "RepairConfig",
    "run_soa",
    "run_sfa",
    "run_sna",
    "run_multi_soa",
    "run_dla",
    "run_pbd",
    "repair_feasibility",
]


class AlgorithmKind(enum.Enum):
    SOA = "soa"            # one-pass subgradient, violations allowed
    SFA = "sfa"            # one-pass subgradient with a feasibility gate
    SNA = "sna"            # one-pass subgradient tracking the remaining budget
    MULTI_SOA = "multisoa"  # multi-choice variant of SOA
    DLA = "dla"            # prefix-LP dual prices, one solve per step
    PBD = "pbd"            # prefix-LP fractional value, randomized rounding


_SUBGRADIENT_KINDS = frozenset(
    {AlgorithmKind.SOA, AlgorithmKind.SFA, AlgorithmKind.SNA, AlgorithmKind.MULTI_SOA}
)


@dataclass(frozen=True)
class AlgorithmConfig:
    """Which algorithm to run and how.

    ``schedule`` is required for the subgradient kinds and must be absent for
    DLA/PBD.  The multi-choice variant only admits the 1/sqrt(n) schedule.
    ``rng_seed`` drives PBD's rounding and the multi-choice tie-breaking.
    """

    kind: AlgorithmKind
    schedule: Optional[StepSchedule] = None
    rng_seed: int = 0
    record_dual_history: bool = False

    def __post_init__(self) -> None:
        if self.kind in _SUBGRADIENT_KINDS:
            if self.schedule is None:
                raise ValueError(f"{self.kind.value} requires a step-size schedule")
            if self.kind is AlgorithmKind.MULTI_SOA and self.schedule is not StepSchedule.SQRT_N:
                raise ValueError("the multi-choice algorithm only supports the 1/sqrt(n) schedule")
        elif self.schedule is not None:
            raise ValueError(f"{self.kind.value} does not take a step-size schedule")


@dataclass(frozen=True)
class RepairConfig:
    """Knobs for the randomized removal pass.

    ``d_lo_override`` replaces the instance's smallest per-column budget in
    the removal-count formula.  ``skip_if_feasible`` bypasses the removal when
    the trace already satisfies every constraint; the default applies the
    removal unconditionally.
    """

    enabled: bool = True
    d_lo_override: Optional[float] = None
    skip_if_feasible: bool = False

    def __post_init__(self) -> None:
        if self.d_lo_override is not None and not self.d_lo_override > 0.0:
            raise ValueError("d_lo_override must be positive")


def _require(cfg: AlgorithmConfig, kind: AlgorithmKind) -> None:
    if cfg.kind is not kind:
        raise ValueError(f"config is for {cfg.kind.value}, expected {kind.value}")


def run_soa(inst: Instance, cfg: AlgorithmConfig) -> RunTrace:
    """One pass of projected dual subgradient steps; no feasibility enforcement.

    Column t is accepted iff its reward strictly beats its priced usage; the
    prices then move along (consumption - budget) scaled by the step size and
    are clamped at zero.
    """
    _require(cfg, AlgorithmKind.SOA)
    n, m = inst.n, inst.m
    cols = np.ascontiguousarray(inst.columns.T)
    rewards = inst.rewards
    d = inst.per_column_budget
    state = DualState(np.zeros(m), cfg.schedule)
    p = state.prices
    decisions = np.zeros(n, dtype=np.int8)
    consumption = np.zeros(m)
    objective = 0.0
    history = np.zeros(n + 1) if cfg.record_dual_history else None
    for t in range(1, n + 1):
        a_t = cols[t - 1]
        gamma = state.gamma(n)
        if threshold_decision(rewards[t - 1], a_t, p):
            decisions[t - 1] = 1
            objective += rewards[t - 1]
            consumption += a_t
            norm = state.step(gamma * (a_t - d))
        else:
            norm = state.step(-gamma * d)
        if history is not None:
            history[t] = norm
    return RunTrace(
        decisions=decisions,
        objective=float(objective),
        consumption=consumption,
        final_prices=p.copy(),
        max_dual_norm=state.max_norm_seen,
        dual_norm_history=history,
        rng_seed=cfg.rng_seed,
    )


def run_sfa(inst: Instance, cfg: AlgorithmConfig) -> RunTrace:
    """Feasible variant: identical price dynamics, gated realized decisions.

    The price update is driven by the tentative decision, before and
    independent of the gate; the tentative acceptance is realized only when
    cumulative consumption stays within capacity in every coordinate
    (negative entries participate in the sums but can never trigger a block
    on their own).  The output is always feasible.
    """
    _require(cfg, AlgorithmKind.SFA)
    if (inst.capacity < 0.0).any():
        raise ValueError("gated runs require non-negative capacity")
    n, m = inst.n, inst.m
    cols = np.ascontiguousarray(inst.columns.T)
    rewards = inst.rewards
    d = inst.per_column_budget
    b = inst.capacity
    state = DualState(np.zeros(m), cfg.schedule)
    p = state.prices
    decisions = np.zeros(n, dtype=np.int8)
    consumption = np.zeros(m)
    objective = 0.0
    history = np.zeros(n + 1) if cfg.record_dual_history else None
    for t in range(1, n + 1):
        a_t = cols[t - 1]
        gamma = state.gamma(n)
        tentative = threshold_decision(rewards[t - 1], a_t, p)
        if tentative:
            norm = state.step(gamma * (a_t - d))
            if bool(np.all(consumption + a_t <= b)):
                decisions[t - 1] = 1
                objective += rewards[t - 1]
                consumption += a_t
        else:
            norm = state.step(-gamma * d)
        if history is not None:
            history[t] = norm
    return RunTrace(
        decisions=decisions,
        objective=float(objective),
        consumption=consumption,
        final_prices=p.copy(),
        max_dual_norm=state.max_norm_seen,
        dual_norm_history=history,
        rng_seed=cfg.rng_seed,
    )


def run_sna(inst: Instance, cfg: AlgorithmConfig) -> RunTrace:
    """Budget-tracking variant: the subgradient aims at the remaining budget rate.

    After deciding column t the update targets ``b_t / (n - t)`` where ``b_t``
    is the budget left.  The update after the final decision would divide by
    zero and is dead state anyway, so it is skipped.
    """
    _require(cfg, AlgorithmKind.SNA)
    if inst.n < 2:
        raise ValueError("budget-tracking run needs n >= 2")
    n, m = inst.n, inst.m
    cols = np.ascontiguousarray(inst.columns.T)
    rewards = inst.rewards
    state = DualState(np.zeros(m), cfg.schedule)
    p = state.prices
    b_rem = inst.capacity.copy()
    decisions = np.zeros(n, dtype=np.int8)
    consumption = np.zeros(m)
    objective = 0.0
    history = np.zeros(n + 1) if cfg.record_dual_history else None
    for t in range(1, n + 1):
        a_t = cols[t - 1]
        gamma = state.gamma(n)
        accepted = threshold_decision(rewards[t - 1], a_t, p)
        if accepted:
            decisions[t - 1] = 1
            objective += rewards[t - 1]
            consumption += a_t
            b_rem -= a_t
        if t < n:
            target = b_rem / (n - t)
            delta = gamma * (a_t - target) if accepted else -gamma * target
            norm = state.step(delta)
        else:
            norm = float(np.linalg.norm(p))
        if history is not None:
            history[t] = norm
    return RunTrace(
        decisions=decisions,
        objective=float(objective),
        consumption=consumption,
        final_prices=p.copy(),
        max_dual_norm=state.max_norm_seen,
        dual_norm_history=history,
        rng_seed=cfg.rng_seed,
    )


def run_multi_soa(minst: MultiInstance, cfg: AlgorithmConfig) -> RunTrace:
    """Multi-choice one-pass run: pick the best-valued alternative, if positive.

    At each step the alternative maximizing reward-minus-priced-usage is
    selected (uniformly at random among exact ties, one RNG draw per accepted
    step); a non-positive best value rejects the whole column.  The step size
    is fixed at 1/sqrt(n).  Decisions record the chosen alternative 1..k,
    0 for reject.
    """
    _require(cfg, AlgorithmKind.MULTI_SOA)
    rng = np.random.default_rng(cfg.rng_seed)
    n, m, k = minst.n, minst.m, minst.k
    blocks = np.ascontiguousarray(minst.column_blocks.transpose(0, 2, 1))  # (n, k, m)
    rewards = minst.reward_blocks
    d = minst.per_column_budget
    state = DualState(np.zeros(m), cfg.schedule)
    p = state.prices
    decisions = np.zeros(n, dtype=np.int32)
    consumption = np.zeros(m)
    objective = 0.0
    history = np.zeros(n + 1) if cfg.record_dual_history else None
    for t in range(1, n + 1):
        gamma = state.gamma(n)
        block = blocks[t - 1]
        r_t = rewards[t - 1]
        values = [r_t[l] - float(block[l] @ p) for l in range(k)]
        best = max(values)
        if best > 0.0:
            ties = [l for l in range(k) if values[l] == best]
            choice = ties[int(rng.integers(len(ties)))]
            decisions[t - 1] = choice + 1
            objective += float(r_t[choice])
            a_sel = block[choice]
            consumption += a_sel
            norm = state.step(gamma * (a_sel - d))
        else:
            norm = state.step(-gamma * d)
        if history is not None:
            history[t] = norm
    return RunTrace(
        decisions=decisions,
        objective=float(objective),
        consumption=consumption,
        final_prices=p.copy(),
        max_dual_norm=state.max_norm_seen,
        dual_norm_history=history,
        rng_seed=cfg.rng_seed,
    )


def run_dla(inst: Instance, *, pivot_tol: float = DEFAULT_PIVOT_TOL,
            feas_tol: float = DEFAULT_FEAS_TOL) -> RunTrace:
    """Per-step-LP baseline: decide with the prefix LP's dual prices.

    Column t is thresholded against the dual prices of the capacity-shrunk LP
    over columns 1..t-1 (zero prices at t=1); each step then solves the
    prefix LP from scratch, with no warm start.  No feasibility enforcement.
    """
    if (inst.capacity < 0.0).any():
        raise ValueError("prefix LPs require non-negative capacity")
    n, m = inst.n, inst.m
    cols = np.ascontiguousarray(inst.columns.T)
    rewards = inst.rewards
    p = np.zeros(m)
    decisions = np.zeros(n, dtype=np.int8)
    consumption = np.zeros(m)
    objective = 0.0
    max_norm = 0.0
    for t in range(1, n + 1):
        a_t = cols[t - 1]
        if threshold_decision(rewards[t - 1], a_t, p):
            decisions[t - 1] = 1
            objective += rewards[t - 1]
            consumption += a_t
        sol = solve_scaled(inst, t, None, pivot_tol=pivot_tol, feas_tol=feas_tol)
        if sol.status is not LpStatus.OPTIMAL:
            raise SimplexError(f"prefix LP at step {t} returned {sol.status.value}")
        p = sol.duals
        max_norm = max(max_norm, float(np.linalg.norm(p)))
    return RunTrace(
        decisions=decisions,
        objective=float(objective),
        consumption=consumption,
        final_prices=p.copy(),
        max_dual_norm=max_norm,
        dual_norm_history=None,
        rng_seed=None,
    )


def run_pbd(inst: Instance, rng_seed: int, *, pivot_tol: float = DEFAULT_PIVOT_TOL,
            feas_tol: float = DEFAULT_FEAS_TOL) -> RunTrace:
    """Per-step-LP baseline: round the prefix LP's own fractional value.

    At step t the capacity-shrunk LP over columns 1..t is solved and x_t is
    set to 1 with probability equal to the t-th coordinate of its optimum.
    Exactly one RNG draw is consumed per step, degenerate probabilities
    included, so traces are seed-stable under code motion.
    """
    if (inst.capacity < 0.0).any():
        raise ValueError("prefix LPs require non-negative capacity")
    rng = np.random.default_rng(rng_seed)
    n, m = inst.n, inst.m
    cols = np.ascontiguousarray(inst.columns.T)
    rewards = inst.rewards
    decisions = np.zeros(n, dtype=np.int8)
    consumption = np.zeros(m)
    objective = 0.0
    for t in range(1, n + 1):
        sol = solve_scaled(inst, t, None, pivot_tol=pivot_tol, feas_tol=feas_tol)
        if sol.status is not LpStatus.OPTIMAL:
            raise SimplexError(f"prefix LP at step {t} returned {sol.status.value}")
        prob = min(max(float(sol.primal[t - 1]), 0.0), 1.0)
        if float(rng.random()) < prob:
            decisions[t - 1] = 1
            objective += rewards[t - 1]
            consumption += cols[t - 1]
    return RunTrace(
        decisions=decisions,
        objective=float(objective),
        consumption=consumption,
        final_prices=np.zeros(m),
        max_dual_norm=0.0,
        dual_norm_history=None,
        rng_seed=rng_seed,
    )


def repair_feasibility(inst: Instance, trace: RunTrace, cfg: RepairConfig,
                       rng_seed: int) -> RunTrace:
    """Randomized removal pass turning a binary trace into a feasible one w.h.p.

    The scaled worst violation ``v = max_i (consumption_i - b_i)^+ /
    (sqrt(n) * log(n))`` is clamped below at 1, so removal happens even for
    already-feasible traces unless ``skip_if_feasible`` is set.  A uniform
    subset of the accepted indices of size
    ``min(floor(2 v n_plus log(n) / (d_lo sqrt(n))) + 1, n_plus)`` is zeroed
    (natural logarithm, floor); objective and consumption are recomputed.
    """
    if not cfg.enabled:
        return trace
    n = inst.n
    if n < 3:
        raise ValueError("repair needs n >= 3 so that log n exceeds 1")
    decisions = np.asarray(trace.decisions)
    if decisions.shape != (n,) or not np.isin(decisions, (0, 1)).all():
        raise ValueError("repair applies to binary decision traces of the instance")
    worst = float(np.max(trace.consumption - inst.capacity))
    if cfg.skip_if_feasible and worst <= 0.0:
        return trace
    log_n = math.log(n)
    sqrt_n = math.sqrt(n)
    v = max(max(worst, 0.0) / (sqrt_n * log_n), 1.0)
    s_plus = np.flatnonzero(decisions == 1)
    n_plus = int(s_plus.size)
    if n_plus == 0:
        return trace
    d_lo = cfg.d_lo_override if cfg.d_lo_override is not None else compute_stats(inst).d_lo
    size = min(math.floor(2.0 * v * n_plus * log_n / (d_lo * sqrt_n)) + 1, n_plus)
    rng = np.random.default_rng(rng_seed)
    removed = rng.choice(s_plus, size=size, replace=False)
    new_decisions = decisions.copy()
    new_decisions[removed] = 0
    x = new_decisions.astype(np.float64)
    return RunTrace(
        decisions=new_decisions,
        objective=float(inst.rewards @ x),
        consumption=inst.columns @ x,
        final_prices=trace.final_prices,
        max_dual_norm=trace.max_dual_norm,
        dual_norm_history=trace.dual_norm_history,
        rng_seed=trace.rng_seed,
    )

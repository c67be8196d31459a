"""The three steering policies: CLB, SLB and RLLB.

Each policy maps one user's per-cell decision context to either a serving
cell (with a PRB allocation) or a not-handled outcome.  A cell is eligible
when the user has coverage on it (CQI >= 1) and it still has at least one
PRB.  CLB picks the least-loaded eligible cell and allocates as much of
the user's need as fits.  SLB picks the cell giving the best achievable
satisfaction and serves only when that best is a full 1.0; a user it
cannot fully satisfy is left unhandled.  RLLB scores eligible cells with
the value network (epsilon-greedy) and serves on the argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LinkState
from .errors import LedgerError
from .valuenet import QNetwork, forward

POLICY_CLB = "clb"
POLICY_SLB = "slb"
POLICY_RLLB = "rllb"
POLICY_NAMES = (POLICY_CLB, POLICY_SLB, POLICY_RLLB)


@dataclass(frozen=True)
class CellOption:
    """One candidate cell as seen by the user being steered."""

    cell_id: int
    current_load: float  # 1 - prbs_remaining / prb_budget
    prbs_remaining: int
    link: LinkState
    prbs_needed: int | None  # None when the link rate is zero (infeasible)
    remaining_users_estimate: int = 0

    @property
    def eligible(self) -> bool:
        return self.link.cqi >= 1 and self.prbs_remaining >= 1


@dataclass(frozen=True)
class DecisionContext:
    user_id: int
    demand_bps: float
    options: tuple[CellOption, ...]
    total_users: int = 1


@dataclass(frozen=True)
class Observation:
    """Value-network input: (3, N) feature matrix plus per-cell eligibility."""

    features: np.ndarray
    mask: np.ndarray  # bool, True = eligible


@dataclass(frozen=True)
class Decision:
    cell_id: int | None
    prbs_allocated: int = 0

    @property
    def handled(self) -> bool:
        return self.cell_id is not None


NOT_HANDLED = Decision(cell_id=None, prbs_allocated=0)


def prbs_needed_for(demand_bps: float, per_prb_rate_bps: float) -> int | None:
    """ceil(demand / per-PRB rate); None when the rate is zero."""
    if per_prb_rate_bps <= 0.0:
        return None
    return math.ceil(demand_bps / per_prb_rate_bps)


def achievable_satisfaction(
    prbs_needed: int | None, prbs_remaining: int, per_prb_rate_bps: float, demand_bps: float
) -> float:
    """Satisfaction if served on this cell right now: min(1, delivered/demand)."""
    if prbs_needed is None or prbs_remaining < 1:
        return 0.0
    alloc = min(prbs_needed, prbs_remaining)
    if alloc >= prbs_needed:
        return 1.0
    return min(1.0, alloc * per_prb_rate_bps / demand_bps)


# --- selection cores (shared by the object API and the engine hot path) ------


def clb_choose(loads, eligible) -> int:
    """Index of the least-loaded eligible cell, lowest index on ties; -1 if none."""
    best = -1
    best_load = math.inf
    for c in range(len(loads)):
        if eligible[c] and loads[c] < best_load:
            best = c
            best_load = loads[c]
    return best


def slb_choose(needed, remaining, eligible) -> int:
    """Cell that fully satisfies the user with the fewest PRBs; -1 when no cell can.

    Every fully-capable cell achieves satisfaction 1.0, so the argmax over
    achievable satisfaction reduces to this set; ties break by fewest PRBs
    consumed, then lowest cell index.
    """
    best = -1
    best_needed = None
    for c in range(len(remaining)):
        if eligible[c] and needed[c] is not None and needed[c] > 0 and remaining[c] >= needed[c]:
            if best < 0 or needed[c] < best_needed:
                best = c
                best_needed = needed[c]
    return best


def rllb_choose(q_values, eligible_indices, epsilon, rng) -> tuple[int, bool]:
    """Epsilon-greedy argmax over eligible cells; returns (index, explored)."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(eligible_indices[rng.integers(len(eligible_indices))]), True
    best = eligible_indices[0]
    best_q = q_values[best]
    for c in eligible_indices[1:]:
        if q_values[c] > best_q:
            best = c
            best_q = q_values[c]
    return int(best), False


# --- object API ---------------------------------------------------------------


def _allocate(option: CellOption) -> Decision:
    alloc = min(option.prbs_needed, option.prbs_remaining)
    return Decision(cell_id=option.cell_id, prbs_allocated=alloc)


def clb_select(ctx: DecisionContext) -> Decision:
    """Serve via the least-loaded eligible cell (partial allocation allowed)."""
    loads = [o.current_load for o in ctx.options]
    eligible = [o.eligible for o in ctx.options]
    idx = clb_choose(loads, eligible)
    if idx < 0:
        return NOT_HANDLED
    return _allocate(ctx.options[idx])


def slb_select(ctx: DecisionContext) -> Decision:
    """Serve via the best-satisfaction cell, only when full satisfaction is achievable."""
    needed = [o.prbs_needed for o in ctx.options]
    remaining = [o.prbs_remaining for o in ctx.options]
    eligible = [o.eligible for o in ctx.options]
    idx = slb_choose(needed, remaining, eligible)
    if idx < 0:
        return NOT_HANDLED
    return _allocate(ctx.options[idx])


def rllb_select(
    obs: Observation,
    qnet: QNetwork,
    epsilon: float,
    rng: np.random.Generator,
    ctx: DecisionContext,
):
    """Score cells with the network, filter ineligible ones, serve the argmax.

    With probability epsilon the choice is uniform over eligible cells
    instead.  Returns (decision, chosen_index, q_values); with no eligible
    cell the decision is NotHandled and no Q-values are recorded.
    """
    eligible_indices = [i for i, ok in enumerate(obs.mask) if ok]
    if not eligible_indices:
        return NOT_HANDLED, None, None
    q_values, _ = forward(qnet, obs.features)
    idx, _ = rllb_choose(q_values, eligible_indices, epsilon, rng)
    return _allocate(ctx.options[idx]), idx, q_values


def build_context(user, cells, ledger, links, estimates=None, total_users=None) -> DecisionContext:
    """Assemble a DecisionContext from the episode ledger and link states.

    ``links`` maps cell index -> LinkState for this user; ``estimates`` is the
    per-cell remaining-user estimate (zeros when the policy does not use it).
    """
    options = []
    for i, cell in enumerate(cells):
        remaining = ledger.remaining[i]
        if remaining < 0 or ledger.allocated[i] + remaining != ledger.budgets[i]:
            raise LedgerError(f"inconsistent ledger for cell {cell.id}")
        link = links[i]
        options.append(
            CellOption(
                cell_id=cell.id,
                current_load=1.0 - remaining / ledger.budgets[i],
                prbs_remaining=remaining,
                link=link,
                prbs_needed=prbs_needed_for(user.profile.demand_bps, link.per_prb_rate_bps),
                remaining_users_estimate=0 if estimates is None else estimates[i],
            )
        )
    return DecisionContext(
        user_id=user.id,
        demand_bps=user.profile.demand_bps,
        options=tuple(options),
        total_users=total_users if total_users is not None else max(1, len(cells)),
    )


def build_observation(ctx: DecisionContext) -> Observation:
    """(3, N) feature matrix: load, clamped resource fraction, remaining-user share."""
    n = len(ctx.options)
    features = np.empty((3, n))
    mask = np.empty(n, dtype=bool)
    for i, o in enumerate(ctx.options):
        features[0, i] = o.current_load
        if o.prbs_needed is None:
            features[1, i] = 1.0
        else:
            features[1, i] = min(1.0, o.prbs_needed / max(1, o.prbs_remaining))
        features[2, i] = o.remaining_users_estimate / max(1, ctx.total_users)
        mask[i] = o.eligible
    return Observation(features=features, mask=mask)

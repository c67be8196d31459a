"""Episode protocol and experiment harness.

Every episode draws a fresh user population, resets all PRB ledgers, visits
the users in a uniformly random order and lets the configured policy steer
each one; it ends when every user was processed or all cells ran out of
PRBs.  Per-episode metrics are the mean satisfaction of handled users (MUS)
and the count of users left at satisfaction zero (NHU).  For RLLB the loop
also records SARSA transitions and updates the network per decision.

All randomness derives from one master seed through named substreams, so
the user drop, handling order and LOS draws of episode k are identical for
every policy, and two runs with the same configuration are byte-identical.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace

import numpy as np

from .channel import CqiTable, LinkArrays, default_cqi_table, link_arrays
from .errors import ConfigurationError, LedgerError, TrainingDivergenceError
from .learning import SarsaParams, apply_td_step, epsilon_at
from .policies import (
    POLICY_CLB,
    POLICY_NAMES,
    POLICY_RLLB,
    POLICY_SLB,
    clb_choose,
    rllb_choose,
    slb_choose,
)
from .scenario import Cell, ScenarioConfig, build_topology, sample_user_drop
from .valuenet import QNetwork, forward, init_weights

log = logging.getLogger("hetsteer")

# Named RNG substreams hashed together with (master seed, episode index).
STREAM_USERS = 0
STREAM_ORDER = 1
STREAM_LOS = 2
STREAM_EXPLORE = 3
STREAM_INIT = 4

CSV_HEADER = "episode,policy,mus,nhu,epsilon,mean_abs_td_error,seed"


def derive_rng(master_seed: int, stream: int, episode: int | None = None) -> np.random.Generator:
    """Independent generator for (seed, stream[, episode])."""
    entropy = [master_seed, stream] if episode is None else [master_seed, stream, episode]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass
class EpisodeState:
    """PRB ledger plus per-cell remaining-user estimates for one episode."""

    budgets: list
    remaining: list
    allocated: list
    estimates: list

    @classmethod
    def fresh(cls, budgets, estimates=None) -> "EpisodeState":
        budgets = [int(b) for b in budgets]
        return cls(
            budgets=budgets,
            remaining=list(budgets),
            allocated=[0] * len(budgets),
            estimates=list(estimates) if estimates is not None else [0] * len(budgets),
        )

    def allocate(self, cell: int, prbs: int) -> None:
        if prbs < 1:
            raise LedgerError(f"allocation of {prbs} PRBs on cell {cell}")
        left = self.remaining[cell] - prbs
        if left < 0:
            raise LedgerError(f"cell {cell} over-allocated: {prbs} requested, {self.remaining[cell]} left")
        self.remaining[cell] = left
        self.allocated[cell] += prbs
        if self.allocated[cell] + left != self.budgets[cell]:
            raise LedgerError(f"cell {cell} ledger out of balance")

    def exhausted(self) -> bool:
        return all(r == 0 for r in self.remaining)


@dataclass
class EpisodeStats:
    episode_index: int
    policy: str
    mus: float
    nhu: int
    epsilon: float | None = None
    mean_abs_td_error: float | None = None
    served: int = 0


@dataclass
class WindowStats:
    episodes: int
    s_av: float
    sigma_s: float
    n_av: float
    sigma_n: float

    def to_dict(self):
        return {
            "episodes": self.episodes,
            "s_av": self.s_av,
            "sigma_s": self.sigma_s,
            "n_av": self.n_av,
            "sigma_n": self.sigma_n,
        }


@dataclass
class RunSummary:
    policy: str
    seed: int
    episodes: int
    overall: WindowStats
    last_window: WindowStats

    def to_dict(self):
        return {
            "policy": self.policy,
            "seed": self.seed,
            "episodes": self.episodes,
            "all_episodes": self.overall.to_dict(),
            "last_1000": self.last_window.to_dict(),
        }


@dataclass
class ExperimentResult:
    summary: RunSummary
    episodes: list
    qnet: QNetwork | None = None


def compute_satisfaction(demand_bps: float, delivered_bps: float) -> float:
    """Ratio of delivered to demanded bit rate, capped at 1."""
    if demand_bps <= 0:
        raise ValueError(f"demand must be positive, got {demand_bps}")
    if delivered_bps < 0:
        raise ValueError(f"delivered rate must be non-negative, got {delivered_bps}")
    return min(1.0, delivered_bps / demand_bps)


def _needed_matrix(demand_bps: np.ndarray, rate_bps: np.ndarray) -> np.ndarray:
    """ceil(demand/rate) per user-cell pair; 0 where the rate is zero."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = demand_bps[:, None] / rate_bps
    needed = np.ceil(np.where(np.isfinite(ratio), ratio, 0.0)).astype(np.int64)
    return needed


def estimate_remaining_users(order, feasible_rows, needed_rows, budgets) -> list:
    """Per-cell handled-user counts from a CLB dry run on a scratch ledger.

    Reuses the episode's handling order and link feasibility, so the counts
    are what the reference method would have achieved on the same draw.
    """
    n_cells = len(budgets)
    remaining = [int(b) for b in budgets]
    counts = [0] * n_cells
    alive = sum(1 for b in remaining if b > 0)
    for u in order:
        feas = feasible_rows[u]
        needed = needed_rows[u]
        eligible = [feas[c] and remaining[c] >= 1 for c in range(n_cells)]
        loads = [1.0 - remaining[c] / budgets[c] for c in range(n_cells)]
        c = clb_choose(loads, eligible)
        if c < 0:
            continue
        alloc = min(needed[c], remaining[c])
        remaining[c] -= alloc
        counts[c] += 1
        if remaining[c] == 0:
            alive -= 1
            if alive == 0:
                break
    return counts


def run_episode(
    policy: str,
    config: ScenarioConfig,
    cells: list[Cell],
    *,
    master_seed: int,
    episode_index: int,
    cqi_table: CqiTable | None = None,
    qnet: QNetwork | None = None,
    params: SarsaParams | None = None,
    train: bool = True,
) -> EpisodeStats:
    """One full episode; for RLLB the network is updated in place when training."""
    if policy not in POLICY_NAMES:
        raise ConfigurationError(f"unknown policy {policy!r}")
    is_rllb = policy == POLICY_RLLB
    if is_rllb and (qnet is None or params is None):
        raise ConfigurationError("rllb episodes need a QNetwork and SarsaParams")
    if cqi_table is None:
        cqi_table = default_cqi_table()

    drop = sample_user_drop(config, cells, derive_rng(master_seed, STREAM_USERS, episode_index))
    n_users = drop.xy.shape[0]
    n_cells = len(cells)
    if n_users == 0:
        return EpisodeStats(
            episode_index=episode_index,
            policy=policy,
            mus=1.0,
            nhu=0,
            epsilon=params.epsilon if is_rllb else None,
            mean_abs_td_error=0.0 if is_rllb and train else None,
        )

    links = link_arrays(config, cells, drop.xy, derive_rng(master_seed, STREAM_LOS, episode_index), cqi_table)
    order = derive_rng(master_seed, STREAM_ORDER, episode_index).permutation(n_users).tolist()

    needed_rows = _needed_matrix(drop.demand_bps, links.rate_bps).tolist()
    feasible_rows = (links.cqi >= 1).tolist()
    rate_rows = links.rate_bps.tolist()
    demands = drop.demand_bps.tolist()
    budgets = [c.prb_budget for c in cells]

    estimates = (
        estimate_remaining_users(order, feasible_rows, needed_rows, budgets) if is_rllb else None
    )
    ledger = EpisodeState.fresh(budgets, estimates)

    explore_rng = derive_rng(master_seed, STREAM_EXPLORE, episode_index) if is_rllb else None
    epsilon = params.epsilon if is_rllb else 0.0

    remaining = ledger.remaining
    est = ledger.estimates
    sat_sum = 0.0
    served = 0
    alive = sum(1 for b in budgets if b > 0)

    # previous SARSA step waiting for its bootstrap value
    prev_cache = None
    prev_action = -1
    prev_q = 0.0
    prev_reward = 0.0
    td_abs_sum = 0.0
    td_count = 0
    inv_total = 1.0 / n_users

    for u in order:
        feas = feasible_rows[u]
        needed = needed_rows[u]
        eligible_indices = [c for c in range(n_cells) if feas[c] and remaining[c] >= 1]
        if not eligible_indices:
            continue  # not handled; no transition

        if policy == POLICY_CLB:
            loads = [1.0 - remaining[c] / budgets[c] for c in range(n_cells)]
            eligible = [feas[c] and remaining[c] >= 1 for c in range(n_cells)]
            chosen = clb_choose(loads, eligible)
            if chosen < 0:
                continue
        elif policy == POLICY_SLB:
            eligible = [feas[c] and remaining[c] >= 1 for c in range(n_cells)]
            chosen = slb_choose(needed, remaining, eligible)
            if chosen < 0:
                continue  # no cell can fully satisfy: refused, satisfaction 0
        else:
            features = np.empty((3, n_cells))
            for c in range(n_cells):
                features[0, c] = 1.0 - remaining[c] / budgets[c]
                features[1, c] = min(1.0, needed[c] / remaining[c]) if (feas[c] and remaining[c] >= 1) else 1.0
                features[2, c] = est[c] * inv_total
            q_values, cache = forward(qnet, features)
            chosen, _ = rllb_choose(q_values, eligible_indices, epsilon, explore_rng)
            q_sa = float(q_values[chosen])
            if train and prev_cache is not None:
                delta = apply_td_step(qnet, prev_cache, prev_action, prev_q, prev_reward, q_sa, params)
                td_abs_sum += abs(delta)
                td_count += 1

        alloc = min(needed[chosen], remaining[chosen])
        ledger.allocate(chosen, alloc)
        if alloc >= needed[chosen]:
            sat = 1.0
        else:
            sat = min(1.0, alloc * rate_rows[u][chosen] / demands[u])
        sat_sum += sat
        served += 1
        if is_rllb:
            if est[chosen] > 0:
                est[chosen] -= 1
            prev_cache, prev_action, prev_q, prev_reward = cache, chosen, q_sa, sat
        if remaining[chosen] == 0:
            alive -= 1
            if alive == 0:
                break  # all resources exhausted: episode ends early

    if is_rllb and train and prev_cache is not None:
        delta = apply_td_step(qnet, prev_cache, prev_action, prev_q, prev_reward, None, params)
        td_abs_sum += abs(delta)
        td_count += 1

    return EpisodeStats(
        episode_index=episode_index,
        policy=policy,
        mus=(sat_sum / served) if served else 1.0,
        nhu=n_users - served,
        epsilon=epsilon if is_rllb else None,
        mean_abs_td_error=(td_abs_sum / td_count if td_count else 0.0) if (is_rllb and train) else None,
        served=served,
    )


def summarize(policy: str, seed: int, stats: list, window: int = 1000) -> RunSummary:
    """S_av/sigma_S over MUS and N_av/sigma_N over NHU, overall and last window."""
    mus = np.array([s.mus for s in stats])
    nhu = np.array([s.nhu for s in stats], dtype=float)

    def win(m, n):
        return WindowStats(
            episodes=len(m),
            s_av=float(np.mean(m)),
            sigma_s=float(np.std(m)),
            n_av=float(np.mean(n)),
            sigma_n=float(np.std(n)),
        )

    w = min(window, len(stats))
    return RunSummary(
        policy=policy,
        seed=seed,
        episodes=len(stats),
        overall=win(mus, nhu),
        last_window=win(mus[-w:], nhu[-w:]),
    )


def _fmt(value) -> str:
    return "" if value is None else format(value, ".12g")


def episode_csv_lines(stats: list, seed: int):
    yield CSV_HEADER
    for s in stats:
        yield (
            f"{s.episode_index},{s.policy},{_fmt(s.mus)},{s.nhu},"
            f"{_fmt(s.epsilon)},{_fmt(s.mean_abs_td_error)},{seed}"
        )


def write_outputs(out_dir, policy: str, stats: list, summary: RunSummary | None, seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{policy}_episodes.csv"
    with open(csv_path, "w") as fh:
        for line in episode_csv_lines(stats, seed):
            fh.write(line + "\n")
    if summary is not None:
        with open(out_dir / f"{policy}_summary.json", "w") as fh:
            json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_experiment(
    config: ScenarioConfig,
    policy: str,
    episodes: int,
    seed: int,
    *,
    out_dir=None,
    cqi_table: CqiTable | None = None,
    params: SarsaParams | None = None,
    qnet: QNetwork | None = None,
    train: bool = True,
    progress_every: int = 5000,
) -> ExperimentResult:
    """Run the episode loop, aggregate the summary, optionally write CSV/JSON.

    For RLLB training runs the exploration probability of episode k is the
    exact schedule value max(0, eps0 - k*eps_dec).  On training divergence
    the partial CSV is still written before the error propagates.
    """
    if policy not in POLICY_NAMES:
        raise ConfigurationError(f"unknown policy {policy!r}")
    if episodes < 1:
        raise ConfigurationError(f"episode count must be >= 1, got {episodes}")
    cells = build_topology(config)
    if cqi_table is None:
        cqi_table = default_cqi_table()

    is_rllb = policy == POLICY_RLLB
    if is_rllb:
        if params is None:
            params = SarsaParams()
        if qnet is None:
            qnet = init_weights(derive_rng(seed, STREAM_INIT))
    stats = []
    try:
        for ep in range(episodes):
            ep_params = params if not (is_rllb and train) else replace(params, epsilon=epsilon_at(params, ep))
            stats.append(
                run_episode(
                    policy,
                    config,
                    cells,
                    master_seed=seed,
                    episode_index=ep,
                    cqi_table=cqi_table,
                    qnet=qnet,
                    params=ep_params,
                    train=train,
                )
            )
            if progress_every and (ep + 1) % progress_every == 0:
                last = stats[-1]
                log.info(
                    "%s episode %d/%d: mus=%.4f nhu=%d", policy, ep + 1, episodes, last.mus, last.nhu
                )
    except TrainingDivergenceError:
        if out_dir is not None:
            write_outputs(out_dir, policy, stats, None, seed)
        raise
    summary = summarize(policy, seed, stats)
    if out_dir is not None:
        write_outputs(out_dir, policy, stats, summary, seed)
    return ExperimentResult(summary=summary, episodes=stats, qnet=qnet)


def format_comparison_table(summaries: dict) -> str:
    """Fixed-width table of S_av/sigma_S/N_av/sigma_N per policy and window."""
    order = [p for p in (POLICY_CLB, POLICY_SLB, POLICY_RLLB) if p in summaries]
    lines = []
    for title, pick in (
        ("all episodes", lambda s: s.overall),
        ("last 1000 episodes", lambda s: s.last_window),
    ):
        lines.append(title)
        lines.append(f"{'':10s}" + "".join(f"{p.upper():>12s}" for p in order))
        for label, attr in (("S_av", "s_av"), ("sigma_S", "sigma_s"), ("N_av", "n_av"), ("sigma_N", "sigma_n")):
            row = f"{label:10s}"
            for p in order:
                row += f"{getattr(pick(summaries[p]), attr):12.3f}"
            lines.append(row)
        lines.append("")
    return "\n".join(lines)

"""Radio link quality: LOS draw, pathloss, received power, SNR, CQI, PRB rate.

Macro cells use the urban-macro (UMa) variant of the standardized urban
propagation model and micro cells the urban-micro (UMi) street-canyon
variant; both are valid from 0.5 to 100 GHz.  Operation is noise-limited:
link SNR is received power against a flat receiver noise floor (default
-110 dBm), and SNR maps to a 15-entry CQI table whose top spectral
efficiency is 5.5547 bit/s/Hz (64QAM ladder).  A PRB spans 12 subcarriers,
so the per-PRB rate is efficiency x 12 x subcarrier spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import ConfigurationError
from .scenario import Cell, ScenarioConfig, TIER_MACRO, TIER_MICRO, User

_C_LIGHT = 3.0e8  # propagation velocity used by the model's breakpoint formula
_H_ENV = 1.0  # effective environment height (UE below 13 m)
_FC_MIN_GHZ = 0.5
_FC_MAX_GHZ = 100.0

N_CQI = 15
_SUBCARRIERS_PER_PRB = 12


# --- CQI table ---------------------------------------------------------------


@dataclass(frozen=True)
class CqiTable:
    """Ordered CQI rows: minimum SNR threshold and spectral efficiency per index.

    Index 0 of the arrays corresponds to CQI 1; CQI 0 means out of range.
    """

    min_snr_db: np.ndarray
    efficiency: np.ndarray

    def __post_init__(self):
        thr = np.asarray(self.min_snr_db, dtype=float)
        eff = np.asarray(self.efficiency, dtype=float)
        if thr.shape != (N_CQI,) or eff.shape != (N_CQI,):
            raise ConfigurationError(f"CQI table must have exactly {N_CQI} rows")
        if np.any(np.diff(thr) <= 0):
            raise ConfigurationError("CQI thresholds must be strictly increasing")
        if np.any(eff <= 0) or np.any(np.diff(eff) <= 0):
            raise ConfigurationError("CQI efficiencies must be positive and strictly increasing")
        object.__setattr__(self, "min_snr_db", thr)
        object.__setattr__(self, "efficiency", eff)

    def cqi_for_snr(self, snr_db):
        """Largest CQI whose threshold <= snr; 0 below the lowest threshold."""
        return np.searchsorted(self.min_snr_db, snr_db, side="right")

    def efficiency_for_cqi(self, cqi: int) -> float:
        return 0.0 if cqi == 0 else float(self.efficiency[cqi - 1])


def load_cqi_table(path) -> CqiTable:
    """Read a plain-text table: 15 lines of `cqi  min_snr_db  efficiency`."""
    rows = []
    try:
        text = path.read_text() if hasattr(path, "read_text") else open(path).read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read CQI table {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ConfigurationError(f"CQI table line {lineno}: expected 3 columns")
        try:
            rows.append((int(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise ConfigurationError(f"CQI table line {lineno}: {exc}") from exc
    if [r[0] for r in rows] != list(range(1, N_CQI + 1)):
        raise ConfigurationError(f"CQI table must list indices 1..{N_CQI} in order")
    return CqiTable(
        min_snr_db=np.array([r[1] for r in rows]),
        efficiency=np.array([r[2] for r in rows]),
    )


@lru_cache(maxsize=1)
def default_cqi_table() -> CqiTable:
    """The packaged 64QAM table with 10%-BLER style SNR thresholds."""
    return load_cqi_table(resources.files("hetsteer.data") / "cqi_64qam.txt")


# --- link state --------------------------------------------------------------


@dataclass(frozen=True)
class LinkState:
    user_id: int
    cell_id: int
    los: bool
    pathloss_db: float
    rx_power_dbm: float
    snr_db: float
    cqi: int
    spectral_efficiency: float
    per_prb_rate_bps: float


def los_probability(tier: str, d2d_m):
    """LOS probability at 2D distance d2d; 1.0 inside the 18 m plateau.

    Accepts scalars or arrays; negative distances are a domain error.
    """
    d = np.asarray(d2d_m, dtype=float)
    if np.any(d < 0):
        raise ValueError("2D distance must be non-negative")
    if tier == TIER_MACRO:
        decay = 63.0
    elif tier == TIER_MICRO:
        decay = 36.0
    else:
        raise ValueError(f"unknown tier {tier!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d > 0, 18.0 / np.maximum(d, 1e-12), 1.0)
        p = ratio + np.exp(-d / decay) * (1.0 - ratio)
    p = np.where(d <= 18.0, 1.0, p)
    return float(p) if np.isscalar(d2d_m) else p


def breakpoint_distance_m(fc_ghz, h_bs_m, h_ut_m) -> float:
    return 4.0 * (h_bs_m - _H_ENV) * (h_ut_m - _H_ENV) * fc_ghz * 1e9 / _C_LIGHT


def _check_frequency(fc_ghz: float) -> None:
    if not (_FC_MIN_GHZ <= fc_ghz <= _FC_MAX_GHZ):
        raise ValueError(
            f"carrier frequency {fc_ghz} GHz outside the model's "
            f"[{_FC_MIN_GHZ}, {_FC_MAX_GHZ}] GHz validity range"
        )


def _los_pathloss(tier, d2d, d3d, fc_ghz, h_bs, h_ut):
    """Dual-slope LOS pathloss, vectorized over distances."""
    dbp = breakpoint_distance_m(fc_ghz, h_bs, h_ut)
    log_d3d = np.log10(d3d)
    log_fc = np.log10(fc_ghz)
    if tier == TIER_MACRO:
        near = 28.0 + 22.0 * log_d3d + 20.0 * log_fc
        far = (
            28.0
            + 40.0 * log_d3d
            + 20.0 * log_fc
            - 9.0 * np.log10(dbp**2 + (h_bs - h_ut) ** 2)
        )
    else:
        near = 32.4 + 21.0 * log_d3d + 20.0 * log_fc
        far = (
            32.4
            + 40.0 * log_d3d
            + 20.0 * log_fc
            - 9.5 * np.log10(dbp**2 + (h_bs - h_ut) ** 2)
        )
    return np.where(d2d <= dbp, near, far)


def _nlos_pathloss(tier, d2d, d3d, fc_ghz, h_bs, h_ut):
    """NLOS pathloss: max of the NLOS formula and the LOS value at the same geometry."""
    log_d3d = np.log10(d3d)
    log_fc = np.log10(fc_ghz)
    if tier == TIER_MACRO:
        nlos = 13.54 + 39.08 * log_d3d + 20.0 * log_fc - 0.6 * (h_ut - 1.5)
    else:
        nlos = 35.3 * log_d3d + 22.4 + 21.3 * log_fc - 0.3 * (h_ut - 1.5)
    return np.maximum(nlos, _los_pathloss(tier, d2d, d3d, fc_ghz, h_bs, h_ut))


def pathloss_db(tier: str, los: bool, d2d_m, fc_ghz: float, h_bs_m: float, h_ut_m: float):
    """Pathloss in dB for one propagation state (scalars or arrays of distances)."""
    _check_frequency(fc_ghz)
    if tier not in (TIER_MACRO, TIER_MICRO):
        raise ValueError(f"unknown tier {tier!r}")
    d2d = np.asarray(d2d_m, dtype=float)
    if np.any(d2d < 0):
        raise ValueError("2D distance must be non-negative")
    d3d = np.hypot(d2d, h_bs_m - h_ut_m)
    fn = _los_pathloss if los else _nlos_pathloss
    pl = fn(tier, d2d, d3d, fc_ghz, h_bs_m, h_ut_m)
    return float(pl) if np.isscalar(d2d_m) else pl


def rx_power_dbm(tx_power_dbm, pathloss, gains_db=0.0):
    """Received power: transmit power minus pathloss plus net gains."""
    return tx_power_dbm - pathloss + gains_db


def snr_db(rx_dbm, noise_floor_dbm):
    """Signal-to-noise ratio against the receiver noise floor."""
    return rx_dbm - noise_floor_dbm


def snr_to_cqi(snr, table: CqiTable) -> int:
    """Largest CQI whose SNR threshold is met; 0 when below the whole table."""
    if table is None:
        raise ConfigurationError("no CQI table provided")
    return int(table.cqi_for_snr(snr))


def per_prb_rate_bps(efficiency: float, subcarrier_spacing_hz: int) -> float:
    return efficiency * _SUBCARRIERS_PER_PRB * subcarrier_spacing_hz


def link_state(
    user: User,
    cell: Cell,
    config: ScenarioConfig,
    rng: np.random.Generator,
    table: CqiTable | None = None,
) -> LinkState:
    """Full link computation for one user-cell pair.

    Consumes one uniform draw for the LOS Bernoulli (plus one normal draw
    when shadow fading is enabled), so results are reproducible from the
    RNG stream position.
    """
    if table is None:
        table = default_cqi_table()
    d2d = math.dist(user.position, cell.position)
    p_los = los_probability(cell.tier, d2d)
    los = bool(rng.random() < p_los)
    pl = pathloss_db(cell.tier, los, d2d, cell.carrier_ghz, cell.antenna_height_m, config.ue_height_m)
    if config.shadow_fading_std_db > 0:
        pl += float(rng.normal(0.0, config.shadow_fading_std_db))
    gains = config.antenna_gains_db[cell.tier]
    rx = rx_power_dbm(cell.tx_power_dbm, pl, gains)
    snr = snr_db(rx, config.noise_floor_dbm)
    cqi = snr_to_cqi(snr, table)
    eff = table.efficiency_for_cqi(cqi)
    return LinkState(
        user_id=user.id,
        cell_id=cell.id,
        los=los,
        pathloss_db=float(pl),
        rx_power_dbm=float(rx),
        snr_db=float(snr),
        cqi=cqi,
        spectral_efficiency=eff,
        per_prb_rate_bps=per_prb_rate_bps(eff, cell.subcarrier_spacing_hz),
    )


@dataclass
class LinkArrays:
    """Per-episode link state for every user-cell pair, column per cell."""

    los: np.ndarray  # (n_users, n_cells) bool
    pathloss_db: np.ndarray
    snr_db: np.ndarray
    cqi: np.ndarray  # int
    rate_bps: np.ndarray  # per-PRB rate; 0 where cqi == 0


def link_arrays(
    config: ScenarioConfig,
    cells: list[Cell],
    user_xy: np.ndarray,
    rng: np.random.Generator,
    table: CqiTable | None = None,
) -> LinkArrays:
    """Vectorized ``link_state`` over a whole user drop.

    LOS uniforms are drawn as one (n_users, n_cells) block in C order, which
    matches per-pair sequential draws in user-major order.
    """
    if table is None:
        table = default_cqi_table()
    n_users = user_xy.shape[0]
    n_cells = len(cells)
    uniforms = rng.random((n_users, n_cells))
    shadow = (
        rng.normal(0.0, config.shadow_fading_std_db, size=(n_users, n_cells))
        if config.shadow_fading_std_db > 0
        else None
    )
    los = np.empty((n_users, n_cells), dtype=bool)
    pl = np.empty((n_users, n_cells))
    snr = np.empty((n_users, n_cells))
    rate = np.empty((n_users, n_cells))
    cqi = np.empty((n_users, n_cells), dtype=np.int64)
    eff_lut = np.concatenate(([0.0], table.efficiency))
    for j, cell in enumerate(cells):
        d2d = np.hypot(user_xy[:, 0] - cell.position[0], user_xy[:, 1] - cell.position[1])
        p_los = los_probability(cell.tier, d2d)
        los[:, j] = uniforms[:, j] < p_los
        pl_los = pathloss_db(cell.tier, True, d2d, cell.carrier_ghz, cell.antenna_height_m, config.ue_height_m)
        pl_nlos = pathloss_db(cell.tier, False, d2d, cell.carrier_ghz, cell.antenna_height_m, config.ue_height_m)
        pl[:, j] = np.where(los[:, j], pl_los, pl_nlos)
        if shadow is not None:
            pl[:, j] += shadow[:, j]
        gains = config.antenna_gains_db[cell.tier]
        snr[:, j] = snr_db(rx_power_dbm(cell.tx_power_dbm, pl[:, j], gains), config.noise_floor_dbm)
        cqi[:, j] = table.cqi_for_snr(snr[:, j])
        rate[:, j] = per_prb_rate_bps(eff_lut[cqi[:, j]], cells[j].subcarrier_spacing_hz)
    return LinkArrays(los=los, pathloss_db=pl, snr_db=snr, cqi=cqi, rate_bps=rate)

"""Exact system-level Monte Carlo simulation of the grid network.

Unlike the analytical approximations, the simulator keeps every interferer on
its true grid position, draws exactly one active device per interfering cell
each slot (randomized scheduling), points every device at its own serving
gateway and the test gateway at its scheduled device, and draws independent
unit-mean exponential fading per link.  It is the ground-truth oracle used to
validate the analytical success probabilities.

Randomness is counter-based: trial batches of fixed size draw from
independent Philox streams keyed by ``(seed, batch_index)``, so results are
bit-reproducible for a given seed and independent of how batches are
scheduled across workers.  The per-slot SINR accumulation runs as a numba
kernel or, with acceleration disabled, as a vectorized numpy path consuming
the identical random arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import accel
from .accel import njit
from .config import Directivity, NetworkConfig, PowerMode, Scenario
from .errors import ConfigError
from .geometry import GridLayout, NetworkModel

BATCH = 4096


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo run: scenario, thresholds, trial budget and seed."""

    model: NetworkModel
    scenario: Scenario
    xi_db: np.ndarray
    trials: int = 50_000
    seed: int = 0
    r_o: float | None = None          # intended link distance (constant power)
    max_gateway_distance: float | None = None  # cap on simulated cells

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        object.__setattr__(self, "xi_db", np.asarray(self.xi_db, dtype=float))


@dataclass(frozen=True)
class SimResult:
    """Empirical success probabilities with binomial confidence intervals."""

    xi_db: np.ndarray
    p_hat: np.ndarray
    ci_halfwidth: np.ndarray
    scenario: Scenario
    seed: int
    trials: int
    neglected_interference_fraction: float
    location_mean: np.ndarray | None = None
    location_std: np.ndarray | None = None


# ---------------------------------------------------------------------------
# interferer tables
# ---------------------------------------------------------------------------


@dataclass
class _Tables:
    w_fixed: np.ndarray      # per-device interference weight with fixed rx gain
    w_base: np.ndarray       # weight without any rx gain (power * tx gain * path loss)
    cos_n: np.ndarray        # cos(n * device bearing), for aim-dependent rx gain
    sin_n: np.ndarray
    cell_start: np.ndarray
    cell_count: np.ndarray
    mean_unweighted: float   # mean over cells of E_j[power * pathloss], gains out


def _select_cells(layout: GridLayout, max_gateway_distance):
    cells = layout.interfering_cells
    if max_gateway_distance is not None:
        d = np.hypot(*layout.gateways[cells].T)
        cells = cells[d <= max_gateway_distance]
    return cells


def _interferer_tables(model: NetworkModel, scenario: Scenario, aim_angle,
                       max_gateway_distance=None) -> _Tables:
    cfg = model.config
    layout = model.layout
    eta = cfg.path_loss_eta
    pattern = cfg.antenna
    cells = _select_cells(layout, max_gateway_distance)

    order = np.argsort(layout.association, kind="stable")
    assoc_sorted = layout.association[order]
    starts = np.searchsorted(assoc_sorted, cells)
    counts = np.searchsorted(assoc_sorted, cells, side="right") - starts

    dev_idx = np.concatenate(
        [order[s : s + c] for s, c in zip(starts, counts)]
    ) if len(cells) else np.empty(0, dtype=np.int64)
    pos = layout.devices[dev_idx]
    own_gw = layout.gateways[layout.association[dev_idx]]

    dist_test = np.hypot(pos[:, 0], pos[:, 1])
    if scenario.power is PowerMode.INVERSION:
        r_own = np.hypot(*(pos - own_gw).T)
        tx_power = cfg.rho_watts * r_own**eta
    else:
        tx_power = np.full(pos.shape[0], model.p_constant)

    if scenario.directivity is Directivity.DGW_DN:
        bearing_own = np.arctan2(own_gw[:, 1] - pos[:, 1], own_gw[:, 0] - pos[:, 0])
        bearing_test = np.arctan2(-pos[:, 1], -pos[:, 0])
        g_tx = 1.0 + pattern.b * np.cos(pattern.n * (bearing_test - bearing_own))
    else:
        g_tx = np.ones(pos.shape[0])

    w_base = tx_power * g_tx * dist_test ** (-eta)

    phi = np.arctan2(pos[:, 1], pos[:, 0])
    if scenario.directivity in (Directivity.DGW_DN, Directivity.DGW_ON):
        g_rx_fixed = 1.0 + pattern.b * np.cos(pattern.n * (phi - aim_angle))
        cos_n = np.cos(pattern.n * phi)
        sin_n = np.sin(pattern.n * phi)
    else:
        g_rx_fixed = np.ones(pos.shape[0])
        cos_n = np.zeros(pos.shape[0])
        sin_n = np.zeros(pos.shape[0])

    new_start = np.zeros(len(cells), dtype=np.int64)
    if len(cells):
        new_start[1:] = np.cumsum(counts)[:-1]
    mean_unw = 0.0
    for s, c in zip(new_start, counts):
        if c:
            mean_unw += float((tx_power[s : s + c] * dist_test[s : s + c] ** (-eta)).mean())
    return _Tables(
        w_fixed=w_base * g_rx_fixed,
        w_base=w_base,
        cos_n=cos_n,
        sin_n=sin_n,
        cell_start=new_start,
        cell_count=counts.astype(np.int64),
        mean_unweighted=mean_unw,
    )


def _neglected_fraction(model: NetworkModel, scenario: Scenario, tables: _Tables,
                        max_gateway_distance) -> float:
    """Mean interference arriving from beyond the simulated cells, as a
    fraction of the total, estimated from the matched-density planar model."""
    cfg = model.config
    eta = cfg.path_loss_eta
    if max_gateway_distance is None:
        r_cut = min(model.layout.half_width, model.layout.half_height)
    else:
        r_cut = max_gateway_distance
    lam = 1.0 / (cfg.delta_x * cfg.delta_y * model.n_g)
    if scenario.power is PowerMode.INVERSION:
        d = np.hypot(*model.layout.central_devices.T)
        mean_power = cfg.rho_watts * float(np.mean(d**eta))
    else:
        mean_power = model.p_constant
    beyond = lam * 2.0 * math.pi * mean_power * r_cut ** (2.0 - eta) / (eta - 2.0)
    inside = tables.mean_unweighted
    return beyond / (beyond + inside) if inside > 0 else 0.0


# ---------------------------------------------------------------------------
# slot kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _slots_fixed_kernel(w, cell_start, cell_count, u_dev, h, h_o, signal, sigma2, out):
    n_t, n_c = u_dev.shape
    for t in range(n_t):
        acc = sigma2
        for ci in range(n_c):
            j = int(u_dev[t, ci] * cell_count[ci])
            if j >= cell_count[ci]:
                j = cell_count[ci] - 1
            acc += h[t, ci] * w[cell_start[ci] + j]
        if acc > 0.0:
            out[t] = signal * h_o[t] / acc
        else:
            out[t] = np.inf


def _slots_fixed_numpy(w, cell_start, cell_count, u_dev, h, h_o, signal, sigma2, out):
    idx = cell_start[None, :] + np.minimum(
        (u_dev * cell_count[None, :]).astype(np.int64), cell_count[None, :] - 1
    )
    denom = sigma2 + (h * w[idx]).sum(axis=1)
    with np.errstate(divide="ignore"):
        out[:] = np.where(denom > 0.0, signal * h_o / np.maximum(denom, 1e-300), np.inf)


@njit(cache=True)
def _slots_aim_kernel(w_base, cos_n, sin_n, b, cell_start, cell_count,
                      u_dev, h, h_o, aim_cos, aim_sin, signal, sigma2, out):
    n_t, n_c = u_dev.shape
    for t in range(n_t):
        acc = sigma2
        ca = aim_cos[t]
        sa = aim_sin[t]
        for ci in range(n_c):
            j = int(u_dev[t, ci] * cell_count[ci])
            if j >= cell_count[ci]:
                j = cell_count[ci] - 1
            k = cell_start[ci] + j
            g_rx = 1.0 + b * (cos_n[k] * ca + sin_n[k] * sa)
            acc += h[t, ci] * w_base[k] * g_rx
        if acc > 0.0:
            out[t] = signal * h_o[t] / acc
        else:
            out[t] = np.inf


def _slots_aim_numpy(w_base, cos_n, sin_n, b, cell_start, cell_count,
                     u_dev, h, h_o, aim_cos, aim_sin, signal, sigma2, out):
    idx = cell_start[None, :] + np.minimum(
        (u_dev * cell_count[None, :]).astype(np.int64), cell_count[None, :] - 1
    )
    g_rx = 1.0 + b * (cos_n[idx] * aim_cos[:, None] + sin_n[idx] * aim_sin[:, None])
    denom = sigma2 + (h * w_base[idx] * g_rx).sum(axis=1)
    with np.errstate(divide="ignore"):
        out[:] = np.where(denom > 0.0, signal * h_o / np.maximum(denom, 1e-300), np.inf)


def _batch_rng(seed, batch_index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, batch_index])))


# ---------------------------------------------------------------------------
# public interface
# ---------------------------------------------------------------------------


def intended_position(config: NetworkConfig, r_o: float):
    """Place the intended device at distance ``r_o`` on the nearest device line."""
    y = config.delta_y / 2.0
    if r_o < y:
        raise ConfigError(f"link distance {r_o} m is below the nearest line at {y} m")
    if r_o > config.cell_radius:
        raise ConfigError(f"link distance {r_o} m exceeds the cell radius")
    return math.sqrt(r_o**2 - y**2), y


def simulate_sinr(simcfg: SimConfig, aim_override=None) -> np.ndarray:
    """Per-trial SINR samples for the configured scenario.

    With constant power the intended device sits at ``r_o`` on the nearest
    line (or at ``aim_override`` = (x, y)); with power control it is drawn
    uniformly from the central-cell grid positions each trial.  Returns an
    array of ``trials`` SINR values (``inf`` when there is no interference
    and no noise).
    """
    model = simcfg.model
    cfg = model.config
    scenario = simcfg.scenario
    eta = cfg.path_loss_eta
    b = cfg.antenna.b
    sigma2 = cfg.noise_power

    from .sinr import intended_gain  # local import to avoid module cycle

    g0 = intended_gain(scenario.directivity, b)
    if scenario.power is PowerMode.CONSTANT:
        if aim_override is not None:
            x0, y0 = aim_override
        else:
            if simcfg.r_o is None:
                raise ConfigError("constant-power simulation needs r_o")
            x0, y0 = intended_position(cfg, simcfg.r_o)
        aim = math.atan2(y0, x0)
        signal = model.p_constant * g0 * math.hypot(x0, y0) ** (-eta)
        tables = _interferer_tables(model, scenario, aim, simcfg.max_gateway_distance)
        random_aim = False
    else:
        signal = cfg.rho_watts * g0
        tables = _interferer_tables(model, scenario, 0.0, simcfg.max_gateway_distance)
        random_aim = True
        central_phi = np.arctan2(
            model.layout.central_devices[:, 1], model.layout.central_devices[:, 0]
        )

    n_cells = len(tables.cell_count)
    out = np.empty(simcfg.trials)
    use_numba = accel.USE_NUMBA
    pos = 0
    batch_index = 0
    while pos < simcfg.trials:
        n = min(BATCH, simcfg.trials - pos)
        rng = _batch_rng(simcfg.seed, batch_index)
        u_dev = rng.random((n, n_cells))
        h = rng.exponential(1.0, (n, n_cells))
        h_o = rng.exponential(1.0, n)
        chunk = np.empty(n)
        if not random_aim:
            fn = _slots_fixed_kernel if use_numba else _slots_fixed_numpy
            fn(tables.w_fixed, tables.cell_start, tables.cell_count,
               u_dev, h, h_o, signal, sigma2, chunk)
        else:
            u_loc = rng.random(n)
            loc = np.minimum((u_loc * len(central_phi)).astype(np.int64),
                             len(central_phi) - 1)
            aim_angles = central_phi[loc]
            fn = _slots_aim_kernel if use_numba else _slots_aim_numpy
            fn(tables.w_base, tables.cos_n, tables.sin_n, b,
               tables.cell_start, tables.cell_count,
               u_dev, h, h_o, np.cos(cfg.antenna.n * aim_angles),
               np.sin(cfg.antenna.n * aim_angles), signal, sigma2, chunk)
        out[pos : pos + n] = chunk
        pos += n
        batch_index += 1
    return out


def estimate_success(simcfg: SimConfig) -> SimResult:
    """Empirical success probability over the threshold grid."""
    sinr = simulate_sinr(simcfg)
    xi = 10.0 ** (simcfg.xi_db / 10.0)
    p_hat = np.array([(sinr > x).mean() for x in xi])
    ci = 1.96 * np.sqrt(p_hat * (1.0 - p_hat) / simcfg.trials)
    scenario = simcfg.scenario
    tables = _interferer_tables(
        simcfg.model, scenario, 0.0, simcfg.max_gateway_distance
    )
    neglected = _neglected_fraction(
        simcfg.model, scenario, tables, simcfg.max_gateway_distance
    )
    return SimResult(
        xi_db=simcfg.xi_db,
        p_hat=p_hat,
        ci_halfwidth=ci,
        scenario=scenario,
        seed=simcfg.seed,
        trials=simcfg.trials,
        neglected_interference_fraction=neglected,
    )


def estimate_success_per_location(simcfg: SimConfig, trials_per_location=2000) -> SimResult:
    """Constant-power success statistics across every central-cell position.

    Runs ``trials_per_location`` slots with the intended device fixed at each
    grid position of the central cell and reports the mean and standard
    deviation of the per-location success probability (the location spread
    that power control removes).
    """
    if simcfg.scenario.power is not PowerMode.CONSTANT:
        raise ConfigError("per-location spread is defined for constant power only")
    model = simcfg.model
    xi = 10.0 ** (simcfg.xi_db / 10.0)
    positions = model.layout.central_devices
    p_loc = np.empty((positions.shape[0], xi.shape[0]))
    for k, (x0, y0) in enumerate(positions):
        sub = SimConfig(
            model=model,
            scenario=simcfg.scenario,
            xi_db=simcfg.xi_db,
            trials=trials_per_location,
            seed=simcfg.seed + k,
            r_o=None,
            max_gateway_distance=simcfg.max_gateway_distance,
        )
        sinr = simulate_sinr(sub, aim_override=(x0, y0))
        p_loc[k] = [(sinr > x).mean() for x in xi]
    mean = p_loc.mean(axis=0)
    std = p_loc.std(axis=0)
    ci = 1.96 * np.sqrt(mean * (1.0 - mean) / (trials_per_location * positions.shape[0]))
    tables = _interferer_tables(model, simcfg.scenario, 0.0, simcfg.max_gateway_distance)
    return SimResult(
        xi_db=simcfg.xi_db,
        p_hat=mean,
        ci_halfwidth=ci,
        scenario=simcfg.scenario,
        seed=simcfg.seed,
        trials=trials_per_location * positions.shape[0],
        neglected_interference_fraction=_neglected_fraction(
            model, simcfg.scenario, tables, simcfg.max_gateway_distance
        ),
        location_mean=mean,
        location_std=std,
    )

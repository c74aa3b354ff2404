"""Device grid, hexagonal gateway lattice and association geometry.

Devices sit on horizontal lines spaced ``delta_y`` apart, with spacing
``delta_x`` along each line.  Gateways form a triangular lattice with
nearest-neighbour distance ``sqrt(3) * R`` whose Voronoi cells are regular
hexagons of circumradius ``R`` (flat top and bottom edges, vertices left and
right).  Lines run midway between gateway rows, so the lines closest to a
gateway sit at ``delta_y / 2`` above and below it.

Device lines relative to the central gateway are at ``(k + 1/2) * delta_y``
and in-line positions at ``(j + 1/4) * delta_x``.  The quarter-spacing
offset makes the enumerated per-line device count equal the closed-form
count ``floor(chord / delta_x + 1/2)`` for every chord length, which keeps
the analytical device count and the constructed layout consistent for
arbitrary parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import AntennaPattern, NetworkConfig
from .errors import EmptyCellError, GeometryError

SQRT3 = math.sqrt(3.0)


def devices_per_gateway(delta_x: float, delta_y: float, radius: float):
    """Closed-form device count served by one gateway.

    Returns ``(Y, N_G)`` where ``Y`` is the number of device lines crossing
    one half of the hexagonal cell and ``N_G`` the total number of devices
    in the cell.  Raises :class:`EmptyCellError` when the cell is too small
    to contain any line (``radius < delta_y / sqrt(3)``).
    """
    if min(delta_x, delta_y, radius) <= 0:
        raise GeometryError("spacings and radius must be positive")
    y_lines = int(math.floor(SQRT3 * radius / (2.0 * delta_y) + 0.5))
    if y_lines < 1:
        raise EmptyCellError(
            f"cell radius {radius} m holds no device line "
            f"(needs at least {delta_y / SQRT3:.6g} m)"
        )
    total = 0
    for i in range(y_lines):
        chord = 2.0 * radius - (2 * i + 1) * delta_y / SQRT3
        total += int(math.floor(chord / delta_x + 0.5))
    return y_lines, 2 * total


def gain(theta, pattern: AntennaPattern):
    """Antenna gain 1 + b*cos(n*theta) toward direction ``theta`` (radians)."""
    return 1.0 + pattern.b * np.cos(pattern.n * np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class GridLayout:
    """Deterministic realization of the device grid over a finite window."""

    devices: np.ndarray          # (N, 2) positions [m]
    gateways: np.ndarray         # (M, 2) positions, index 0 at the origin
    association: np.ndarray      # (N,) gateway index per device
    n_g: int                     # devices in the central cell
    y_lines: int                 # device lines per half cell
    central_devices: np.ndarray  # (n_g, 2) positions in the central cell
    interfering_cells: np.ndarray  # gateway indices with a full cell, != 0
    half_width: float
    half_height: float

    @property
    def n_devices(self):
        return self.devices.shape[0]


def _gateway_lattice(radius, half_width, half_height):
    """Triangular lattice points covering the window, origin first.

    Basis (3R/2, sqrt(3)R/2) and (0, sqrt(3)R); points are sorted by
    distance from the origin (then x, then y) so indices are deterministic
    and boundary ties in the association resolve toward inner gateways.
    """
    pitch_x = 1.5 * radius
    a_max = int(math.ceil((half_width + 2 * radius) / pitch_x))
    b_max = int(math.ceil((half_height + 2 * radius) / (SQRT3 * radius))) + a_max
    a = np.arange(-a_max, a_max + 1)
    b = np.arange(-b_max, b_max + 1)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    xs = pitch_x * aa
    ys = SQRT3 * radius * (0.5 * aa + bb)
    keep = (np.abs(xs) <= half_width + 2 * radius) & (
        np.abs(ys) <= half_height + 2 * radius
    )
    pts = np.column_stack([xs[keep], ys[keep]])
    ab = np.column_stack([aa[keep], bb[keep]])
    d2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    order = np.lexsort((pts[:, 1], pts[:, 0], d2))
    pts = pts[order]
    ab = ab[order]
    index_of = {(int(pa), int(pb)): i for i, (pa, pb) in enumerate(ab)}
    return pts, ab, index_of


def _associate(devices, radius, ab_index):
    """Nearest-gateway association with ties toward the lower gateway index."""
    pitch_x = 1.5 * radius
    a_frac = devices[:, 0] / pitch_x
    b_frac = devices[:, 1] / (SQRT3 * radius) - 0.5 * a_frac
    a0 = np.floor(a_frac).astype(np.int64)
    b0 = np.floor(b_frac).astype(np.int64)

    n = devices.shape[0]
    best_d2 = np.full(n, np.inf)
    cand_d2 = np.empty((n, 9))
    cand_idx = np.full((n, 9), np.iinfo(np.int64).max, dtype=np.int64)
    k = 0
    for da in (-1, 0, 1):
        for db in (-1, 0, 1):
            ga = a0 + da
            gb = b0 + db
            gx = pitch_x * ga
            gy = SQRT3 * radius * (0.5 * ga + gb)
            d2 = (devices[:, 0] - gx) ** 2 + (devices[:, 1] - gy) ** 2
            cand_d2[:, k] = d2
            for row in range(n):
                key = (int(ga[row]), int(gb[row]))
                idx = ab_index.get(key)
                if idx is not None:
                    cand_idx[row, k] = idx
            k += 1
    best_d2 = cand_d2.min(axis=1, keepdims=True)
    masked = np.where(cand_d2 == best_d2, cand_idx, np.iinfo(np.int64).max)
    assoc = masked.min(axis=1)
    if np.any(assoc == np.iinfo(np.int64).max):
        raise GeometryError("device associated to a gateway outside the lattice window")
    return assoc


def build_grid(config: NetworkConfig, half_width: float, half_height: float) -> GridLayout:
    """Construct the device grid and gateway lattice over a finite window.

    The window is the rectangle ``[-half_width, half_width] x
    [-half_height, half_height]`` centred on the origin gateway.  It must at
    least contain the central hexagon.  Cells whose hexagon lies fully
    inside the window are available as interfering cells for simulation;
    devices beyond the window are simply absent (finite-window truncation).
    """
    radius = config.cell_radius
    if half_width < radius or half_height < SQRT3 * radius / 2.0:
        raise GeometryError(
            f"window too small: needs half extents >= ({radius}, "
            f"{SQRT3 * radius / 2.0:.6g}) m to contain the central cell"
        )
    y_lines, n_g = devices_per_gateway(config.delta_x, config.delta_y, radius)

    dx, dy = config.delta_x, config.delta_y
    k_max = int(math.floor(half_height / dy - 0.5))
    k = np.arange(-k_max - 1, k_max + 1)
    line_y = (k + 0.5) * dy
    line_y = line_y[np.abs(line_y) <= half_height]
    j_lo = int(math.ceil(-half_width / dx - 0.25))
    j_hi = int(math.floor(half_width / dx - 0.25))
    line_x = (np.arange(j_lo, j_hi + 1) + 0.25) * dx
    xx, yy = np.meshgrid(line_x, line_y, indexing="ij")
    devices = np.column_stack([xx.ravel(), yy.ravel()])

    gateways, _, ab_index = _gateway_lattice(radius, half_width, half_height)
    assoc = _associate(devices, radius, ab_index)

    central = devices[assoc == 0]
    if central.shape[0] != n_g:
        raise GeometryError(
            f"central cell enumeration ({central.shape[0]} devices) does not "
            f"match the closed-form count ({n_g})"
        )

    full = (np.abs(gateways[:, 0]) + radius <= half_width) & (
        np.abs(gateways[:, 1]) + SQRT3 * radius / 2.0 <= half_height
    )
    full[0] = False
    interfering = np.flatnonzero(full)

    return GridLayout(
        devices=devices,
        gateways=gateways,
        association=assoc,
        n_g=n_g,
        y_lines=y_lines,
        central_devices=central,
        interfering_cells=interfering,
        half_width=half_width,
        half_height=half_height,
    )


def default_window(config: NetworkConfig, gateway_radius_factor: float = 12.0):
    """Square window holding every cell whose gateway is within the factor*R disc."""
    half = (gateway_radius_factor + 1.5) * config.cell_radius
    return half, half


def table_window(config: NetworkConfig, n_lines: int = 30, area_m2: float = 70e6):
    """Window matching a stated deployment size: line count and total area."""
    half_height = n_lines * config.delta_y / 2.0
    half_width = area_m2 / (n_lines * config.delta_y) / 2.0
    return half_width, half_height


def second_moment_distance(layout: GridLayout) -> float:
    """Mean squared device-to-gateway distance over the central cell."""
    if layout.central_devices.shape[0] == 0:
        raise EmptyCellError("central cell holds no devices")
    d2 = layout.central_devices[:, 0] ** 2 + layout.central_devices[:, 1] ** 2
    return float(d2.mean())


def equivalent_constant_power(layout: GridLayout, rho: float, eta: float) -> float:
    """Constant transmission power with the same total consumption as
    distance-proportional power control at target received power ``rho``."""
    if layout.central_devices.shape[0] == 0:
        raise EmptyCellError("central cell holds no devices")
    d = np.hypot(layout.central_devices[:, 0], layout.central_devices[:, 1])
    return float(rho * np.mean(d**eta))


@dataclass(frozen=True)
class NetworkModel:
    """Configuration plus constructed layout and the derived constants."""

    config: NetworkConfig
    layout: GridLayout
    n_g: int
    t_a: int
    e_r2: float
    p_constant: float  # resolved constant transmission power [W]

    @property
    def cycle_seconds(self):
        return self.n_g * self.config.slot_ts


def build_model(
    config: NetworkConfig,
    half_width: float | None = None,
    half_height: float | None = None,
) -> NetworkModel:
    """Build the layout and resolve every derived quantity the analyses need."""
    if half_width is None or half_height is None:
        w, h = default_window(config)
        half_width = half_width if half_width is not None else w
        half_height = half_height if half_height is not None else h
    layout = build_grid(config, half_width, half_height)
    t_a = config.arrival_cycles(layout.n_g)
    e_r2 = second_moment_distance(layout)
    if config.constant_p_watts is not None:
        p_const = config.constant_p_watts
    else:
        p_const = equivalent_constant_power(layout, config.rho_watts, config.path_loss_eta)
    return NetworkModel(
        config=config,
        layout=layout,
        n_g=layout.n_g,
        t_a=t_a,
        e_r2=e_r2,
        p_constant=p_const,
    )

"""Network parameters, scenario descriptors and configuration file I/O.

The configuration file is INI-style with sections ``[network]``,
``[antenna]``, ``[traffic]`` and ``[power]``.  Keys carry their unit in the
name (``delta_x_m``, ``rho_dbm``, ``packet_kbits``); everything is converted
to SI units (meters, seconds, watts, bits) on load and the core never sees a
dB value.  Defaults reproduce the reference parameter set: 25 m device
spacing, 200 m line spacing, 490 m cells, eta = 4, 10 ms slots, 21.6 s
inter-arrival, 80 kbit packets, 1 MHz bandwidth, zeta = 0.8, -110 dBm noise,
-100 dBm power-control target.
"""

from __future__ import annotations

import configparser
import enum
import io
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


def dbm_to_watts(dbm):
    return 10.0 ** (dbm / 10.0) * 1e-3


def watts_to_dbm(w):
    return 10.0 * math.log10(w / 1e-3)


class Directivity(enum.Enum):
    """Antenna deployment: directional/omni gateways (GW) and nodes (N)."""

    DGW_DN = "dgw-dn"
    DGW_ON = "dgw-on"
    OGW_ON = "ogw-on"


class PowerMode(enum.Enum):
    CONSTANT = "constant"
    INVERSION = "inversion"


class Approximation(enum.Enum):
    ONE_D = "1d"
    TWO_D = "2d"
    MONTE_CARLO = "mc"


@dataclass(frozen=True)
class Scenario:
    """Directivity case, power mode and interference approximation."""

    directivity: Directivity
    power: PowerMode = PowerMode.CONSTANT
    approximation: Approximation = Approximation.TWO_D

    def __post_init__(self):
        if (
            self.approximation is Approximation.ONE_D
            and self.power is PowerMode.INVERSION
        ):
            raise ConfigError(
                "the line-process approximation is only available for "
                "constant transmission power"
            )

    @property
    def label(self):
        return f"{self.directivity.value}/{self.power.value}/{self.approximation.value}"


@dataclass(frozen=True)
class AntennaPattern:
    """Cosine gain pattern 1 + b*cos(n*theta).

    ``b`` in [0, 1] sets the main-lobe depth (peak gain 1 + b, isotropic at
    b = 0) and ``n`` is the number of main lobes.  The pattern radiates unit
    mean gain over a full turn for any (b, n).
    """

    b: float = 1.0
    n: int = 1

    def __post_init__(self):
        if not 0.0 <= self.b <= 1.0:
            raise ConfigError(f"beam parameter b must be in [0, 1], got {self.b}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"lobe count n must be a positive integer, got {self.n}")


@dataclass(frozen=True)
class NetworkConfig:
    """Full parameter set for the grid network and its traffic."""

    delta_x: float = 25.0              # device spacing on a line [m]
    delta_y: float = 200.0             # line spacing [m]
    cell_radius: float = 490.0         # hexagon circumradius R [m]
    path_loss_eta: float = 4.0
    rate_gap_zeta: float = 0.8         # practical-rate gap, in (0, 1]
    bandwidth_w: float = 1e6           # [Hz]
    slot_ts: float = 10e-3             # [s]
    interarrival_tr: float = 21.6      # [s]
    packet_bits: float = 80e3
    noise_power: float = 1e-14         # [W]
    antenna: AntennaPattern = field(default_factory=AntennaPattern)
    power_mode: PowerMode = PowerMode.INVERSION
    rho_watts: float = 1e-13           # power-control received-power target [W]
    constant_p_watts: float | None = None  # None: derive from rho equivalence

    def __post_init__(self):
        if self.delta_x <= 0 or self.delta_y <= 0 or self.cell_radius <= 0:
            raise ConfigError("spacings and cell radius must be positive")
        if self.delta_y < self.delta_x:
            raise ConfigError(
                "line spacing delta_y must be >= device spacing delta_x "
                "(rotate the network otherwise)"
            )
        if self.path_loss_eta <= 2.0:
            raise ConfigError("path-loss exponent must exceed 2")
        if not 0.0 < self.rate_gap_zeta <= 1.0:
            raise ConfigError("rate gap zeta must be in (0, 1]")
        for name in ("bandwidth_w", "slot_ts", "interarrival_tr", "packet_bits"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.noise_power < 0:
            raise ConfigError("noise power must be non-negative")
        if self.rho_watts <= 0:
            raise ConfigError("power-control target must be positive")
        if self.constant_p_watts is not None and self.constant_p_watts <= 0:
            raise ConfigError("constant transmission power must be positive")

    def arrival_cycles(self, n_g: int) -> int:
        """Packet inter-arrival expressed in transmission cycles.

        The inter-arrival time must be an integer multiple of the cycle
        length ``n_g * slot_ts`` so that packets arrive every whole number
        of cycles.
        """
        cycle = n_g * self.slot_ts
        t_a = self.interarrival_tr / cycle
        rounded = round(t_a)
        if rounded < 1 or abs(t_a - rounded) > 1e-6 * max(1.0, t_a):
            raise ConfigError(
                f"inter-arrival time {self.interarrival_tr} s is not an integer "
                f"multiple of the transmission cycle {cycle} s"
            )
        return int(rounded)

    def with_power(self, mode: PowerMode) -> "NetworkConfig":
        return replace(self, power_mode=mode)


_DEFAULTS = {
    "network": {
        "delta_x_m": "25",
        "delta_y_m": "200",
        "cell_radius_m": "490",
        "path_loss_eta": "4",
        "noise_dbm": "-110",
    },
    "antenna": {
        "beam_b": "1.0",
        "lobes_n": "1",
    },
    "traffic": {
        "slot_ms": "10",
        "interarrival_s": "21.6",
        "packet_kbits": "80",
        "rate_gap_zeta": "0.8",
        "bandwidth_mhz": "1",
    },
    "power": {
        "mode": "inversion",
        "rho_dbm": "-100",
        "constant_p_mw": "auto",
    },
}


def default_config() -> NetworkConfig:
    """Configuration mirroring the reference parameter table."""
    return NetworkConfig()


def _get(parser, section, key, cast):
    try:
        raw = parser.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError):
        raw = _DEFAULTS[section][key]
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc


def load_config(path_or_text, from_text=False) -> NetworkConfig:
    """Parse a configuration file (or literal text) into a NetworkConfig."""
    parser = configparser.ConfigParser()
    try:
        if from_text:
            parser.read_string(path_or_text)
        else:
            with open(path_or_text) as fh:
                parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from exc

    for section in parser.sections():
        if section not in _DEFAULTS:
            raise ConfigError(f"unknown configuration section [{section}]")
        for key in parser[section]:
            if key not in _DEFAULTS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    mode_raw = _get(parser, "power", "mode", str).strip().lower()
    try:
        mode = PowerMode(mode_raw)
    except ValueError:
        raise ConfigError(f"power mode must be 'constant' or 'inversion', got {mode_raw!r}")

    p_raw = _get(parser, "power", "constant_p_mw", str).strip().lower()
    if p_raw == "auto":
        p_watts = None
    else:
        try:
            p_watts = float(p_raw) * 1e-3
        except ValueError:
            raise ConfigError(f"constant_p_mw must be a number or 'auto', got {p_raw!r}")

    antenna = AntennaPattern(
        b=_get(parser, "antenna", "beam_b", float),
        n=_get(parser, "antenna", "lobes_n", int),
    )
    return NetworkConfig(
        delta_x=_get(parser, "network", "delta_x_m", float),
        delta_y=_get(parser, "network", "delta_y_m", float),
        cell_radius=_get(parser, "network", "cell_radius_m", float),
        path_loss_eta=_get(parser, "network", "path_loss_eta", float),
        noise_power=dbm_to_watts(_get(parser, "network", "noise_dbm", float)),
        antenna=antenna,
        slot_ts=_get(parser, "traffic", "slot_ms", float) * 1e-3,
        interarrival_tr=_get(parser, "traffic", "interarrival_s", float),
        packet_bits=_get(parser, "traffic", "packet_kbits", float) * 1e3,
        rate_gap_zeta=_get(parser, "traffic", "rate_gap_zeta", float),
        bandwidth_w=_get(parser, "traffic", "bandwidth_mhz", float) * 1e6,
        power_mode=mode,
        rho_watts=dbm_to_watts(_get(parser, "power", "rho_dbm", float)),
        constant_p_watts=p_watts,
    )


def config_snapshot(config: NetworkConfig) -> dict:
    """Resolved configuration as a flat dict of SI values (for manifests)."""
    return {
        "delta_x_m": config.delta_x,
        "delta_y_m": config.delta_y,
        "cell_radius_m": config.cell_radius,
        "path_loss_eta": config.path_loss_eta,
        "rate_gap_zeta": config.rate_gap_zeta,
        "bandwidth_hz": config.bandwidth_w,
        "slot_s": config.slot_ts,
        "interarrival_s": config.interarrival_tr,
        "packet_bits": config.packet_bits,
        "noise_w": config.noise_power,
        "beam_b": config.antenna.b,
        "lobes_n": config.antenna.n,
        "power_mode": config.power_mode.value,
        "rho_w": config.rho_watts,
        "constant_p_w": config.constant_p_watts,
    }


def default_config_text() -> str:
    """Default configuration file contents (INI text)."""
    parser = configparser.ConfigParser()
    parser.read_dict(_DEFAULTS)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()

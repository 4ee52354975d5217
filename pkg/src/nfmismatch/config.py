"""Scenario configuration: physical constants, waveform and array settings."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299792458.0


class ConfigError(ValueError):
    """Raised when a scenario violates its invariants."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """All constants of one simulated uplink scenario.

    Powers are stored in the units they are usually quoted in (dBm, dBm/Hz, dB);
    the linear SI values are exposed as properties.

    ``first_subcarrier`` sets the index of the lowest subcarrier, so subcarrier
    frequencies are ``carrier_freq + k * subcarrier_spacing`` for
    ``k = first_subcarrier, ..., first_subcarrier + n_subcarriers - 1``.

    ``amplitude_freq_scaling`` keeps the ``lambda_k / lambda_c`` factor in the
    per-antenna amplitude of the near-field models; switching it off leaves the
    purely geometric ``|p| / |p - b_n|`` taper.
    """

    n_antennas: int = 64
    n_rfc: int = 64
    n_transmissions: int = 1
    n_subcarriers: int = 10
    carrier_freq: float = 140e9
    bandwidth: float = 400e6
    tx_power_dbm: float = 20.0
    noise_psd_dbm_hz: float = -173.855
    noise_figure_db: float = 10.0
    seed: int = 0
    combiner: str = "digital"
    first_subcarrier: int = 0
    amplitude_freq_scaling: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        n, m = self.n_antennas, self.n_rfc
        for name in ("n_antennas", "n_rfc", "n_transmissions", "n_subcarriers"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if m > n:
            raise ConfigError(f"n_rfc ({m}) cannot exceed n_antennas ({n})")
        if not (self.carrier_freq > 0 and np.isfinite(self.carrier_freq)):
            raise ConfigError("carrier_freq must be positive")
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise ConfigError("bandwidth must be positive")
        for name in ("tx_power_dbm", "noise_psd_dbm_hz", "noise_figure_db"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.combiner not in ("digital", "analog"):
            raise ConfigError(f"combiner must be 'digital' or 'analog', got {self.combiner!r}")
        if self.combiner == "digital" and m != n:
            raise ConfigError("digital combining requires n_rfc == n_antennas")
        if self.combiner == "analog" and m != 1:
            raise ConfigError("analog combining requires n_rfc == 1")
        if int(self.first_subcarrier) != self.first_subcarrier or self.first_subcarrier < 0:
            raise ConfigError("first_subcarrier must be a nonnegative integer")
        if self.carrier_freq + self.first_subcarrier * self.subcarrier_spacing <= 0:
            raise ConfigError("subcarrier frequencies must be positive")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")

    # derived quantities

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth / self.n_subcarriers

    @property
    def tx_power(self) -> float:
        """Average transmit power in watts."""
        return float(dbm_to_watt(self.tx_power_dbm))

    @property
    def noise_psd(self) -> float:
        """Noise PSD in W/Hz."""
        return float(dbm_to_watt(self.noise_psd_dbm_hz))

    @property
    def noise_variance(self) -> float:
        return self.noise_psd * self.bandwidth * float(db_to_linear(self.noise_figure_db))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def subcarrier_indices(self) -> np.ndarray:
        return self.first_subcarrier + np.arange(self.n_subcarriers)

    @property
    def subcarrier_freqs(self) -> np.ndarray:
        return self.carrier_freq + self.subcarrier_indices * self.subcarrier_spacing

    @property
    def subcarrier_wavelengths(self) -> np.ndarray:
        return SPEED_OF_LIGHT / self.subcarrier_freqs

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def with_power(self, tx_power_dbm: float) -> "ScenarioConfig":
        return self.replace(tx_power_dbm=float(tx_power_dbm))

    def check_subcarrier(self, k: int) -> int:
        lo = self.first_subcarrier
        hi = lo + self.n_subcarriers - 1
        if int(k) != k or not lo <= k <= hi:
            raise ValueError(f"subcarrier index {k} outside [{lo}, {hi}]")
        return int(k) - lo


# flat "key = value" config files

_FILE_KEYS = {
    "n_antennas": ("n_antennas", int),
    "n_rfc": ("n_rfc", int),
    "n_transmissions": ("n_transmissions", int),
    "n_subcarriers": ("n_subcarriers", int),
    "carrier_freq_hz": ("carrier_freq", float),
    "bandwidth_hz": ("bandwidth", float),
    "tx_power_dbm": ("tx_power_dbm", float),
    "noise_psd_dbm_hz": ("noise_psd_dbm_hz", float),
    "noise_figure_db": ("noise_figure_db", float),
    "seed": ("seed", int),
    # optional extensions
    "combiner": ("combiner", str),
    "first_subcarrier": ("first_subcarrier", int),
    "amplitude_freq_scaling": ("amplitude_freq_scaling", "bool"),
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse ``key = value`` lines (``#`` comments, ``:`` also accepted as separator).

    Keys missing from the text keep the value from ``base`` (defaults otherwise).
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = (s.strip() for s in line.split(sep, 1))
                break
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in _FILE_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        field, kind = _FILE_KEYS[key]
        try:
            if kind == "bool":
                values[field] = _parse_bool(value)
            elif kind is int:
                as_float = float(value)
                if as_float != int(as_float):
                    raise ValueError
                values[field] = int(as_float)
            else:
                values[field] = kind(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    base = base if base is not None else ScenarioConfig()
    return dataclasses.replace(base, **values)


def load_config(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    return parse_config(Path(path).read_text(), base=base)


def dump_config(config: ScenarioConfig) -> str:
    lines = []
    for key, (field, _) in _FILE_KEYS.items():
        value = getattr(config, field)
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"

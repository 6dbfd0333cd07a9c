"""Deterministic synthetic case studies with daily and seasonal structure.

Random numbers come from a self-contained xorshift64* generator so that the
streams are reproducible in any language:

* seeding: ``state = splitmix64(seed)``, where ``splitmix64(z)`` adds
  ``0x9E3779B97F4A7C15`` to ``z`` then applies ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
  z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`` (all mod 2**64); a zero
  result is replaced by ``0x9E3779B97F4A7C15``;
* update: ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27`` (mod 2**64);
  output ``x * 0x2545F4914F6CDD1D`` mod 2**64;
* uniform on [0, 1): ``(output >> 11) * 2**-53``;
* standard normal: Box-Muller on two uniforms, ``sqrt(-2 ln(1-u1)) * cos(2 pi u2)``,
  one normal per pair.

Each node and series draws from its own stream seeded with
``seed * 1000003 + stream_id``. Units are MW, MWh and k-currency.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from storax.errors import ConfigError
from storax.esom import ConversionTech, ModelInstance, TransportLink
from storax.formulations import StorageTech
from storax.timeseries import HOURS_PER_DAY, FullTimeSeries, load_timeseries, write_timeseries

VARIANTS = ("standard", "no_transport", "no_dispatchable", "electricity_only")
HORIZON = 8760
_MASK = (1 << 64) - 1


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class XorShift64Star:
    """Portable 64-bit generator; see the module docstring for the exact equations."""

    def __init__(self, seed: int):
        self.state = splitmix64(seed & _MASK) or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def uniform(self, n: int) -> np.ndarray:
        return np.array([(self.next_u64() >> 11) * 2.0**-53 for _ in range(n)])

    def normal(self, n: int) -> np.ndarray:
        out = np.empty(n)
        for k in range(n):
            u1 = (self.next_u64() >> 11) * 2.0**-53
            u2 = (self.next_u64() >> 11) * 2.0**-53
            out[k] = math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)
        return out


@dataclass(frozen=True)
class CaseConfig:
    """Synthetic case settings.

    The variant switches technology toggles: ``no_transport`` drops the links,
    ``no_dispatchable`` drops the backstop generator and ``electricity_only``
    removes the winter demand amplification.
    """

    seed: int = 0
    num_nodes: int = 3
    horizon: int = HORIZON
    variant: str = "standard"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.num_nodes < 1:
            raise ConfigError("num_nodes must be >= 1")
        if self.horizon < HOURS_PER_DAY or self.horizon % HOURS_PER_DAY:
            raise ConfigError("horizon must be a positive multiple of 24")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    @property
    def transport(self) -> bool:
        return self.variant != "no_transport" and self.num_nodes > 1

    @property
    def dispatchable(self) -> bool:
        return self.variant != "no_dispatchable"

    @property
    def seasonal_demand(self) -> bool:
        return self.variant != "electricity_only"


def _ar1(noise: np.ndarray, coef: float) -> np.ndarray:
    out = np.empty_like(noise)
    scale = math.sqrt(1.0 - coef * coef)
    x = noise[0]
    for k, e in enumerate(noise):
        x = coef * x + scale * e if k else e
        out[k] = x
    return out


def _node_series(config: CaseConfig, k: int) -> dict[str, np.ndarray]:
    T = config.horizon
    days = T // HOURS_PER_DAY
    t = np.arange(T)
    day = t // HOURS_PER_DAY + 0.5
    hour = t % HOURS_PER_DAY + 0.5
    year = 2.0 * math.pi * day / 365.0

    def stream(sid):
        return XorShift64Star(config.seed * 1000003 + 16 * k + sid)

    # solar: summer-peaking envelope, daylight bell widening in summer, cloudy spells
    summer = -np.cos(year)
    envelope = 0.6 + 0.35 * summer
    half_day = 6.0 + 2.0 * summer
    bell = np.clip(np.cos(np.pi * (hour - 12.5) / (2.0 * half_day)), 0.0, None)
    bell[np.abs(hour - 12.5) >= half_day] = 0.0
    clouds = np.repeat(_ar1(stream(1).normal(days), 0.5), HOURS_PER_DAY)
    solar = envelope * bell * np.clip(0.8 + 0.25 * clouds, 0.15, 1.0) * (0.95 + 0.05 * k / max(config.num_nodes - 1, 1))
    solar = np.clip(solar + 0.02 * stream(2).normal(T) * (bell > 0), 0.0, 1.0)

    # wind: winter-peaking mean with weather systems lasting several days
    wind_mean = 0.36 - 0.14 * summer
    weather = _ar1(stream(3).normal(T), 0.97)
    wind = np.clip(wind_mean + 0.2 * weather, 0.0, 1.0)

    # demand: base, winter heating analogue, evening-peaking diurnal profile
    scale = 10.0 * (1.0 + 0.15 * ((k % 3) - 1))
    winter = 1.0 + (0.4 * -summer if config.seasonal_demand else 0.0)
    diurnal = 1.0 + 0.15 * np.sin(2.0 * np.pi * (hour - 10.0) / 24.0) + 0.1 * np.exp(-((hour - 19.0) ** 2) / 4.0)
    demand = scale * winter * diurnal * (1.0 + 0.02 * stream(4).normal(T))
    return {
        "cf_solar": solar,
        "cf_wind": wind,
        "demand": np.clip(demand, 0.0, None),
    }


def technologies(config: CaseConfig) -> tuple[tuple, tuple, tuple]:
    """Conversion, storage and link menus of ``config`` (annualized k-currency)."""
    conversion = [
        ConversionTech("solar", capex=50.0, cf="cf_solar"),
        ConversionTech("wind", capex=120.0, cf="cf_wind"),
    ]
    if config.dispatchable:
        conversion.append(ConversionTech("backstop", capex=60.0, var_cost=0.3))
    storage = (
        # short-term: expensive energy, cheap power, efficient, leaky
        StorageTech("battery", phi=1e-4, eta_charge=0.95, eta_discharge=0.95, cost_energy=15.0, cost_power=5.0),
        # long-term: cheap energy, expensive power, lossy conversion, tight
        StorageTech("hydrogen", phi=1e-5, eta_charge=0.7, eta_discharge=0.55, cost_energy=0.15, cost_power=60.0),
    )
    nodes = node_names(config)
    links = ()
    if config.transport:
        links = tuple(
            TransportLink(f"line{k + 1}", nodes[k], nodes[k + 1], capex=15.0, loss=0.03)
            for k in range(len(nodes) - 1)
        )
    return tuple(conversion), storage, links


def node_names(config: CaseConfig) -> tuple:
    return tuple(f"n{k + 1}" for k in range(config.num_nodes))


def generate(config: CaseConfig) -> tuple[FullTimeSeries, ModelInstance]:
    """Time series and an instance description (without aggregation) for ``config``."""
    columns = {}
    for k, node in enumerate(node_names(config)):
        for attr, values in _node_series(config, k).items():
            columns[f"{attr}@{node}"] = values
    series = FullTimeSeries.from_columns(columns)
    conversion, storage, links = technologies(config)
    nodes = node_names(config)
    instance = ModelInstance(
        nodes=nodes,
        conversion=conversion,
        storage=storage,
        links=links,
        demand={n: "demand" for n in nodes},
        aggregation=None,
    )
    return series, instance


def write_case(config: CaseConfig, outdir: str | Path) -> Path:
    """Write ``timeseries.csv``, ``instance.json`` and ``case.json`` into ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    series, instance = generate(config)
    write_timeseries(series, out / "timeseries.csv")
    instance.save(out / "instance.json")
    (out / "case.json").write_text(json.dumps(asdict(config), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return out


def load_case(casedir: str | Path) -> tuple[FullTimeSeries, ModelInstance]:
    """Read a case written by :func:`write_case` (or assembled by hand)."""
    d = Path(casedir)
    if not (d / "timeseries.csv").exists() or not (d / "instance.json").exists():
        raise ConfigError(f"{d} must contain timeseries.csv and instance.json")
    return load_timeseries(d / "timeseries.csv"), ModelInstance.load(d / "instance.json")

import json

import numpy as np
import pytest

from storax.casegen import (
    VARIANTS,
    CaseConfig,
    XorShift64Star,
    generate,
    load_case,
    node_names,
    splitmix64,
    technologies,
    write_case,
)
from storax.errors import ConfigError

MASK = (1 << 64) - 1


def reference_stream(seed, n):
    """Straight transcription of the documented update equations."""
    z = (seed + 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    x = (z ^ (z >> 31)) or 0x9E3779B97F4A7C15
    out = []
    for _ in range(n):
        x ^= x >> 12
        x ^= (x << 25) & MASK
        x ^= x >> 27
        out.append(((x * 0x2545F4914F6CDD1D) & MASK) >> 11)
    return [v * 2.0**-53 for v in out]


def test_splitmix_known_value():
    # first output of the canonical splitmix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


@pytest.mark.parametrize("seed", [0, 1, 12345, 2**40 + 7])
def test_generator_matches_documented_equations(seed):
    assert XorShift64Star(seed).uniform(50).tolist() == reference_stream(seed, 50)


def test_uniform_and_normal_moments():
    rng = XorShift64Star(9)
    u = rng.uniform(20000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01
    z = rng.normal(20000)
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1.0) < 0.03


def test_same_seed_same_bytes(tmp_path):
    cfg = CaseConfig(seed=4, horizon=24 * 20)
    a = write_case(cfg, tmp_path / "a")
    b = write_case(cfg, tmp_path / "b")
    for name in ("timeseries.csv", "instance.json", "case.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = write_case(CaseConfig(seed=5, horizon=24 * 20), tmp_path / "c")
    assert (a / "timeseries.csv").read_bytes() != (c / "timeseries.csv").read_bytes()


def test_load_case_round_trip(tmp_path):
    cfg = CaseConfig(seed=2, horizon=48)
    out = write_case(cfg, tmp_path / "case")
    series, inst = load_case(out)
    ref_series, ref_inst = generate(cfg)
    assert series.columns == ref_series.columns
    for col in series.columns:
        np.testing.assert_array_equal(series[col], ref_series[col])
    assert inst.to_dict() == ref_inst.to_dict()
    assert json.loads((out / "case.json").read_text())["seed"] == 2
    with pytest.raises(ConfigError):
        load_case(tmp_path / "missing")


@pytest.fixture(scope="module")
def year():
    return generate(CaseConfig(seed=0))


def test_ranges(year):
    series, inst = year
    assert series.horizon == 8760
    for col in series.columns:
        v = series[col]
        assert v.size == 8760
        if col.startswith("cf_"):
            assert v.min() >= 0.0 and v.max() <= 1.0
        else:
            assert v.min() >= 0.0
    assert inst.nodes == ("n1", "n2", "n3")


def test_seasonal_shapes(year):
    series, _ = year
    daily = lambda col: series[col].reshape(365, 24).mean(axis=1)  # noqa: E731
    summer, winter = slice(150, 240), np.r_[0:45, 320:365]
    assert daily("cf_solar@n1")[summer].mean() > 1.5 * daily("cf_solar@n1")[winter].mean()
    assert daily("cf_wind@n1")[winter].mean() > daily("cf_wind@n1")[summer].mean()
    assert daily("demand@n1")[winter].mean() > 1.2 * daily("demand@n1")[summer].mean()
    # solar is zero at night
    assert np.all(series["cf_solar@n1"].reshape(365, 24)[:, 0] == 0.0)


def test_electricity_only_has_no_seasonal_amplification():
    series, _ = generate(CaseConfig(seed=0, variant="electricity_only"))
    daily = series["demand@n1"].reshape(365, 24).mean(axis=1)
    assert abs(daily[150:240].mean() / daily[np.r_[0:45, 320:365]].mean() - 1.0) < 0.02


def test_cost_structure():
    _, storage, _ = technologies(CaseConfig())
    battery, hydrogen = storage
    assert battery.cost_energy > hydrogen.cost_energy
    assert battery.cost_power < hydrogen.cost_power
    assert battery.phi > hydrogen.phi


@pytest.mark.parametrize("variant", VARIANTS)
def test_variants(variant):
    cfg = CaseConfig(variant=variant, horizon=48)
    conversion, storage, links = technologies(cfg)
    names = [t.name for t in conversion]
    assert ("backstop" in names) == (variant != "no_dispatchable")
    assert bool(links) == (variant != "no_transport")
    assert len(storage) == 2
    series, inst = generate(cfg)
    assert len(inst.links) == len(links)


def test_line_topology():
    _, _, links = technologies(CaseConfig(num_nodes=4))
    assert [(l.node_from, l.node_to) for l in links] == [("n1", "n2"), ("n2", "n3"), ("n3", "n4")]
    assert technologies(CaseConfig(num_nodes=1))[2] == ()
    assert node_names(CaseConfig(num_nodes=2)) == ("n1", "n2")


@pytest.mark.parametrize(
    "kwargs", [dict(variant="nope"), dict(num_nodes=0), dict(horizon=25), dict(horizon=0), dict(seed=-1)]
)
def test_config_errors(kwargs):
    with pytest.raises(ConfigError):
        CaseConfig(**kwargs)

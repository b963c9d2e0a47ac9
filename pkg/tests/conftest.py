"""Shared fixtures: canned scenarios and a scriptable RNG stub."""

import numpy as np
import pytest

from fairsense.config import Scenario, scenario_from_dict


class ScriptedRng:
    """Feeds predetermined integers/floats; falls back to a real generator."""

    def __init__(self, integers=(), randoms=(), seed=0):
        self._integers = list(integers)
        self._randoms = list(randoms)
        self._fallback = np.random.Generator(np.random.Philox(key=seed))

    def integers(self, low, high=None, **kwargs):
        if self._integers:
            return self._integers.pop(0)
        return self._fallback.integers(low, high, **kwargs)

    def random(self):
        if self._randoms:
            return self._randoms.pop(0)
        return self._fallback.random()

    def gamma(self, shape, scale, size=None):
        return self._fallback.gamma(shape, scale, size=size)

    def normal(self, loc, scale):
        return self._fallback.normal(loc, scale)

    def uniform(self, low, high, size=None):
        return self._fallback.uniform(low, high, size=size)

    def choice(self, n, size=None, replace=True):
        return self._fallback.choice(n, size=size, replace=replace)


def two_node_scenario(**overrides) -> Scenario:
    """One AP, one adaptive station, fading off, no synthetic traffic."""
    data = {
        "seed": 1,
        "epochs": 5,
        "channel": {"fading": False, "nakagami_m": 1.0},
        "aps": [{"name": "AP1", "x": 0.0, "y": 0.0}],
        "stas": [{"name": "STA_AI", "x": 5.0, "y": 0.0, "ap": "AP1",
                  "ai": True}],
        "traffic": {"ai_uplink": None, "ai_downlink": None,
                    "legacy_downlink": None, "obss_downlink": None},
    }
    data.update(overrides)
    return scenario_from_dict(data)


def tiny_traffic_scenario(**overrides) -> Scenario:
    """1 AP / 2 STA network with light flows; fast enough for long runs."""
    data = {
        "seed": 1,
        "epochs": 20,
        "trace": True,
        "aps": [{"name": "AP1", "x": 0.0, "y": 0.0}],
        "stas": [
            {"name": "STA_AI", "x": 4.0, "y": 0.0, "ap": "AP1", "ai": True},
            {"name": "STA2", "x": -3.0, "y": 1.0, "ap": "AP1"},
        ],
        "traffic": {
            "ai_uplink": {"rate_hz": 30.0, "bytes_mean": 600,
                          "bytes_jitter": 50},
            "ai_downlink": {"rate_hz": 20.0, "bytes_mean": 800,
                            "bytes_jitter": 80},
            "legacy_downlink": {"rate_hz": 20.0, "bytes_mean": 1500,
                                "bytes_jitter": 100},
            "obss_downlink": None,
        },
    }
    data.update(overrides)
    return scenario_from_dict(data)


def desk_scenario(**overrides) -> Scenario:
    """The 2-AP/5-STA evaluation scenario (saturating neighbour BSS)."""
    data = {
        "seed": 1,
        "epochs": 500,
        "controller": "static",
        "channel": {"alpha": 3.0, "nakagami_m": 1.0},
        "mac": {"queue_limit": 50},
        "aps": [
            {"name": "AP1", "x": 0.0, "y": 0.0},
            {"name": "AP2", "x": -28.0, "y": 0.0},
        ],
        "stas": [
            {"name": "STA_AI", "x": 6.0, "y": 0.0, "ap": "AP1", "ai": True},
            {"name": "STA2", "x": -1.5, "y": 1.5, "ap": "AP1"},
            {"name": "STA3", "x": 1.5, "y": -1.5, "ap": "AP1"},
            {"name": "STA4", "x": -30.0, "y": 1.0, "ap": "AP2"},
            {"name": "STA5", "x": -29.0, "y": -2.0, "ap": "AP2"},
        ],
        "traffic": {
            "ai_uplink": {"rate_hz": 200.0, "bytes_mean": 1500,
                          "bytes_jitter": 100},
            "ai_downlink": {"rate_hz": 15.0, "bytes_mean": 1000,
                            "bytes_jitter": 100},
            "legacy_downlink": {"rate_hz": 75.0, "bytes_mean": 8000,
                                "bytes_jitter": 800, "mtu": 8000},
            "obss_downlink": {"rate_hz": 150.0, "bytes_mean": 8000,
                              "bytes_jitter": 800, "mtu": 8000},
        },
    }
    data.update(overrides)
    return scenario_from_dict(data)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=12345))

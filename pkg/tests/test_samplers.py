"""Samplers: the three kinds, their analytic moments, and spec parsing."""

from __future__ import annotations

from random import Random

import pytest

from coldtrace import samplers


def test_constant_sampler():
    s = samplers.constant(42.5)
    assert s.sample(Random(0)) == 42.5
    assert (s.mean, s.min, s.max) == (42.5, 42.5, 42.5)


def test_uniform_sampler_bounds_and_mean():
    s = samplers.uniform(10.0, 20.0)
    rng = Random(123)
    draws = [s.sample(rng) for _ in range(2000)]
    assert all(10.0 <= d <= 20.0 for d in draws)
    assert abs(sum(draws) / len(draws) - 15.0) < 0.5
    assert (s.mean, s.min, s.max) == (15.0, 10.0, 20.0)


def test_uniform_requires_ordered_bounds():
    with pytest.raises(ValueError):
        samplers.uniform(5.0, 1.0)


def test_cycle_sampler_ignores_rng_and_wraps():
    s = samplers.cycle([1.0, 2000.0])
    assert [s.sample(Random(i)) for i in range(5)] == [1.0, 2000.0, 1.0, 2000.0, 1.0]
    s.reset()
    assert s.sample(Random(99)) == 1.0
    assert (s.mean, s.min, s.max) == (1000.5, 1.0, 2000.0)


def test_cycle_needs_values():
    with pytest.raises(ValueError):
        samplers.cycle([])


def test_from_spec_accepts_bare_numbers():
    s = samplers.from_spec(84)
    assert s.kind == "constant" and s.value == 84.0


def test_from_spec_mappings_round_trip():
    for spec in ({"kind": "constant", "value": 3.0},
                 {"kind": "uniform", "low": 1.0, "high": 2.0},
                 {"kind": "cycle", "values": [1.0, 2.0, 3.0]}):
        assert samplers.from_spec(spec).to_spec() == spec


def test_from_spec_rejects_garbage():
    with pytest.raises(ValueError):
        samplers.from_spec("constant")
    with pytest.raises(ValueError):
        samplers.from_spec({"value": 3.0})
    with pytest.raises(ValueError):
        samplers.from_spec({"kind": "pareto", "alpha": 2})


def test_sampling_is_deterministic_under_seeded_rng():
    s = samplers.uniform(0.0, 1.0)
    a = [s.sample(Random(7)) for _ in range(3)]
    b = [s.sample(Random(7)) for _ in range(3)]
    assert a == b

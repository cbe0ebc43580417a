"""Shared fixtures: the shipped scenario, its trace, and small run builders."""

from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import settings

from coldtrace import config

settings.register_profile("ci", deadline=None, max_examples=100)
settings.load_profile("ci")

REPO_ROOT = Path(__file__).resolve().parent.parent
SHIPMENT_YAML = REPO_ROOT / "scenarios" / "vaccine_shipment.yaml"


@pytest.fixture(scope="session")
def shipment_setup():
    return config.load_setup(SHIPMENT_YAML)


@pytest.fixture(scope="session")
def shipment_trace(shipment_setup):
    """The shipped vaccine scenario at seed 42; reused by many tests."""
    return shipment_setup.run(42)

"""Shared fixtures: the four study scenarios and a random instance maker."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from pancap.model import PeriodParams, validate_params
from pancap.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def example1() -> PeriodParams:
    return load_scenario(SCENARIOS / "example1.scn").single


@pytest.fixture(scope="session")
def example2() -> PeriodParams:
    return load_scenario(SCENARIOS / "example2.scn").single


@pytest.fixture(scope="session")
def example3() -> list[PeriodParams]:
    return list(load_scenario(SCENARIOS / "example3.scn").periods)


@pytest.fixture(scope="session")
def example4() -> list[PeriodParams]:
    return list(load_scenario(SCENARIOS / "example4.scn").periods)


def random_params(rng: random.Random, gamma: float | None = None,
                  t: float = 1.0) -> PeriodParams:
    """A plausible, valid random instance for fuzzing."""
    lam1 = rng.uniform(0.2, 1.2)
    lam2 = rng.uniform(0.2, 1.5)
    lam3 = rng.uniform(0.1, 1.0)
    s1 = rng.uniform(0.5, 0.9)
    s2 = rng.uniform(0.25, s1 - 0.1)
    s3 = rng.uniform(0.05, s2 - 0.05)
    lam = lam1 + lam2 + lam3
    raw = PeriodParams(
        lambda1=lam1, lambda2=lam2, lambda3=lam3,
        s1=s1, s2=s2, s3=s3,
        p=rng.uniform(0.1, 0.9), p_covid=rng.uniform(0.05, 0.95),
        r=rng.uniform(0.05, 0.6),
        gamma=gamma if gamma is not None else rng.uniform(0.15, 0.95) * lam,
        delta10=rng.uniform(0.05, 0.4), delta12=rng.uniform(0.05, 0.4),
        delta21=rng.uniform(0.05, 0.4), delta23=rng.uniform(0.05, 0.4),
        delta32=rng.uniform(0.05, 0.4), delta34=rng.uniform(0.05, 0.4),
        beta1=rng.uniform(0.05, 0.4), beta2=rng.uniform(0.05, 0.4),
        beta3=rng.uniform(0.05, 0.4),
        sigma1=rng.uniform(0.05, 0.4), sigma2=rng.uniform(0.05, 0.4),
        sigma3=rng.uniform(0.05, 0.4),
        t=t, reward_B=rng.uniform(0.15, 0.5), phi=rng.uniform(0.3, 1.0))
    return validate_params(raw)

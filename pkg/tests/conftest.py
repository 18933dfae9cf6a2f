from __future__ import annotations

import numpy as np
import pytest

import sfkolmo as sk


@pytest.fixture(scope="session")
def lv_coexist():
    """Two competitors that invade each other's monoculture.

    lambda_2(pi_1) = 2 - 1*1.25 - 0.5 = 0.25 and lambda_1(pi_2) = 1.75.
    """
    return sk.build(sk.LVCompetitive(a=[3.0, 2.0], b=[[2.0, 1.0], [1.0, 2.0]]))


@pytest.fixture(scope="session")
def pp3():
    """Food chain whose top predator sits almost exactly at threshold."""
    return sk.build(
        sk.PredatorPrey3(
            a=[4.0, 1.0, 2.0],
            b=[[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [1.0, 0.5, 1.0]],
        )
    )


@pytest.fixture(scope="session")
def sir_gentle():
    """SIR variant mild enough for interior runs (small noise, weak incidence)."""
    return sk.build(
        sk.SIR(
            a=1.0,
            b1=1.0,
            b2=1.0,
            c1=0.5,
            c2=0.5,
            r=0.5,
            gamma=[[0.3, 0.0], [0.0, 0.3]],
        )
    )


@pytest.fixture
def quick_cfg():
    return sk.SimConfig(dt=1e-3, T=200.0, burn_in=20.0, seed=7, thinning=10)


def constant_segment(spec, x):
    return sk.SegmentBuffer.from_constant(spec.r, 1e-3, np.asarray(x, dtype=float))

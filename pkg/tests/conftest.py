"""Shared fixtures.

The expensive budget-800 campaign runs used by the trend tests are executed
once per session and shared; everything else is cheap and built per test.
"""

import time

import pytest

from conflictfuzz import campaign as cp
from conflictfuzz import genome as gn
from conflictfuzz import rng as rngmod
from conflictfuzz import road, search

TREND_SEEDS = (101, 202, 303)
TREND_BUDGET = 800


@pytest.fixture
def straight_graph():
    return road.build_template("straight3", 200.0, 20.0)


@pytest.fixture
def twoway_graph():
    return road.build_template("twoway2", 200.0, 20.0)


@pytest.fixture
def merge_graph():
    return road.build_template("merge", 300.0, 20.0)


@pytest.fixture
def cross_graph():
    return road.build_template("cross", 200.0, 20.0)


@pytest.fixture
def small_genome(straight_graph):
    rng = rngmod.child_rng(7, "fixture")
    return gn.random_genome(rng, straight_graph, 2, 30)


def run_trend_campaign(variant, seed, budget=TREND_BUDGET):
    cfg = cp.CampaignConfig(ga=search.GaConfig(rng_seed=seed),
                            budget_steps=budget, variant=variant)
    return cp.run_campaign(cfg)


@pytest.fixture(scope="session")
def trend_campaigns():
    """Budget-800 campaign metrics (with wall time) for all variants x 3 seeds."""
    out = {}
    for seed in TREND_SEEDS:
        for variant in cp.VARIANTS:
            t0 = time.perf_counter()
            metrics = run_trend_campaign(variant, seed).metrics
            out[(variant, seed)] = (metrics, time.perf_counter() - t0)
    return out

"""Scenario runner: convergence under partitions, determinism, serialization."""

import pytest

from polyrdl.scenario import Scenario, run_scenario


def test_three_replicas_converge():
    result = run_scenario(Scenario(seed=42, op_count=300))
    assert result.converged
    assert len(result.digests) == 3
    assert len(set(result.digests.values())) == 1


def test_partition_healing_mid_run_still_converges():
    scenario = Scenario(
        seed=7,
        op_count=400,
        partitions=[(100.0, 400.0, [("R0", "R1"), ("R1", "R2")])],
    )
    assert run_scenario(scenario).converged


def test_single_replica_degenerate_topology():
    result = run_scenario(Scenario(seed=3, replicas=1, op_count=120))
    assert result.converged
    assert list(result.digests.values())[0] == result.oracle


def test_same_scenario_same_outcome():
    scenario = Scenario(seed=100, op_count=250, partitions=[(50.0, 150.0, [("R0", "R2")])])
    r1 = run_scenario(scenario)
    r2 = run_scenario(Scenario.from_json(scenario.to_json()))
    assert r1.trace_hash == r2.trace_hash
    assert r1.digests == r2.digests
    assert r1.updates_total == r2.updates_total


def test_scenario_json_round_trip():
    scenario = Scenario(
        seed=5,
        replicas=4,
        op_count=10,
        partitions=[(1.0, 2.0, [("R0", "R3")])],
        types=("counter", "map"),
    )
    again = Scenario.from_json(scenario.to_json())
    assert again == scenario


@pytest.mark.parametrize("seed", range(8))
def test_seed_sweep_small(seed):
    scenario = Scenario(
        seed=seed,
        op_count=300 + (seed * 53) % 200,
        partitions=[(120.0, 300.0, [("R0", "R1")])] if seed % 2 else [],
    )
    assert run_scenario(scenario).converged

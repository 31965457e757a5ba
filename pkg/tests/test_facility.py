import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decision_engine.sim import FacilitySim, JobWave, ProviderSpec, SimScenario, load_scenario, parse_scenario
from decision_engine.errors import ConfigParseError

JOB = {"cpus": 1, "memory_mb": 1000, "wall_hours": 2.0}


def scenario(providers, waves=(), funds=100.0, allocation=100.0, seed=1, idle_timeout=300.0):
    return SimScenario(
        name="t", seed=seed, providers=tuple(providers), initial_funds=funds,
        initial_allocation=allocation, job_waves=tuple(waves), duration=1e6, idle_timeout=idle_timeout,
    )


CLOUD = ProviderSpec("aws", "cloud", capacity=10, unit_cost=0.5, startup_latency=60)


def test_startup_latency():
    sim = FacilitySim(scenario([CLOUD]))
    assert sim.provision_submit({"class_id": "aws", "slots": 5, "for_bundle": "b"})["accepted"]
    sim.step(30)
    assert sim.alive_slots()["aws"] == 0
    sim.step(30)
    assert sim.alive_slots()["aws"] == 5


def test_two_hour_job_charges_two_unit_costs():
    spec = ProviderSpec("aws", "cloud", capacity=1, unit_cost=0.5, startup_latency=0)
    sim = FacilitySim(scenario([spec], [JobWave(0, 1, JOB, ("aws",))]))
    sim.provision_submit({"class_id": "aws", "slots": 1, "for_bundle": "b", "wall_hours": 2.0})
    sim.step(7200)
    assert sim.completed == 1
    assert sim.ledger.cloud_spend == pytest.approx(2 * 0.5)
    assert sim.ledger.slot_hours["aws"] == pytest.approx(2.0)


def test_idle_slot_retires_after_timeout():
    sim = FacilitySim(scenario([CLOUD]))
    sim.provision_submit({"class_id": "aws", "slots": 1, "for_bundle": "b"})
    sim.step(60)
    sim.step(299)
    assert sim.alive_slots()["aws"] == 1
    sim.step(2)
    assert sim.alive_slots()["aws"] == 0
    assert sim.ledger.cloud_spend == pytest.approx(0.5 * 300 / 3600)


def test_submit_rejections():
    sim = FacilitySim(scenario([CLOUD], funds=1.0))
    r = sim.provision_submit({"class_id": "aws", "slots": 11, "for_bundle": "b"})
    assert not r["accepted"] and "capacity" in r["reason"]
    r = sim.provision_submit({"class_id": "aws", "slots": 5, "for_bundle": "b"})
    assert not r["accepted"] and "funds" in r["reason"]
    assert not sim.provision_submit({"class_id": "nope", "slots": 1, "for_bundle": "b"})["accepted"]
    assert not sim.provision_submit({"class_id": "aws", "slots": 0, "for_bundle": "b"})["accepted"]
    sim.set_provider_state("aws", False)
    assert "down" in sim.provision_submit({"class_id": "aws", "slots": 1, "for_bundle": "b"})["reason"]


def test_requests_are_targets_per_bundle():
    sim = FacilitySim(scenario([CLOUD]))
    assert sim.provision_submit({"class_id": "aws", "slots": 3, "for_bundle": "b"})["new_slots"] == 3
    assert sim.provision_submit({"class_id": "aws", "slots": 4, "for_bundle": "b"})["new_slots"] == 1
    assert sim.provision_submit({"class_id": "aws", "slots": 2, "for_bundle": "c"})["new_slots"] == 2


def test_budget_query_after_spend():
    spec = ProviderSpec("aws", "cloud", capacity=1, unit_cost=0.5, startup_latency=0)
    sim = FacilitySim(scenario([spec], [JobWave(0, 1, JOB, ("aws",))], funds=10.0))
    sim.provision_submit({"class_id": "aws", "slots": 1, "for_bundle": "b", "wall_hours": 2.0})
    sim.step(3600)
    b = sim.budget_query()
    assert b["cloud_funds_remaining"] == pytest.approx(10.0 - sim.ledger.cloud_spend)
    assert b["cloud_funds_uncommitted"] <= b["cloud_funds_remaining"]


def test_manifest_occupancy_matches_slots():
    grid = ProviderSpec("g", "grid", capacity=50, startup_latency=100)
    sim = FacilitySim(scenario([grid, CLOUD], [JobWave(0, 30, JOB, ("g", "aws"))]))
    rng = random.Random(0)
    for _ in range(60):
        c = rng.choice(["g", "aws"])
        sim.provision_submit({"class_id": c, "slots": rng.randint(1, 8), "for_bundle": str(rng.randint(0, 3))})
        sim.step(rng.choice([10, 50, 200]))
        manifest = {r["class_id"]: r["current_occupancy"] for r in sim.manifest_query()}
        oracle = {k: 0 for k in manifest}
        for s in sim.slots.values():
            if s.state != "retired":
                oracle[s.class_id] += 1
        assert manifest == oracle
        assert all(m <= p.capacity for m, p in zip(manifest.values(), (sim.providers[k] for k in manifest)))


def test_preemption_fraction_matches_rate():
    rate = 0.5
    grid = ProviderSpec("g", "grid", capacity=100000, startup_latency=0, preemption_rate=rate)
    short = {"cpus": 1, "memory_mb": 1, "wall_hours": 1.0}
    n = 12000
    sim = FacilitySim(scenario([grid], [JobWave(0, n, short, ("g",))], seed=99))
    sim.provision_submit({"class_id": "g", "slots": n, "for_bundle": "b"})
    sim.step(3600)
    # every slot ran one job for up to one hour, one slot-hour of exposure each
    assert sim.ledger.slot_hours["g"] >= 0.7 * n
    fraction = sim.preemptions / n
    assert abs(fraction - rate) <= 0.05 * rate


def test_preempted_jobs_requeue_with_identity():
    grid = ProviderSpec("g", "grid", capacity=100, startup_latency=0, preemption_rate=0.9)
    sim = FacilitySim(scenario([grid], [JobWave(0, 50, JOB, ("g",))], seed=3))
    sim.provision_submit({"class_id": "g", "slots": 50, "for_bundle": "b", "wall_hours": 2.0})
    sim.step(3600)
    assert sim.preemptions > 0
    assert sim.queued == sim.preemptions
    assert all(j.preferred == ("g",) for j in sim.jobs)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.lists(st.tuples(st.sampled_from(["aws", "hpc", "g"]), st.integers(1, 20)), max_size=25))
def test_conservation_and_budget_safety(seed, requests):
    providers = [
        ProviderSpec("aws", "cloud", 30, unit_cost=1.0, startup_latency=30),
        ProviderSpec("hpc", "hpc", 30, unit_cost=1.0, startup_latency=90),
        ProviderSpec("g", "grid", 30, startup_latency=10, preemption_rate=0.3),
    ]
    waves = [JobWave(0, 40, {"cpus": 1, "memory_mb": 1, "wall_hours": 0.5}, ("aws", "hpc", "g"))]
    sim = FacilitySim(scenario(providers, waves, funds=7.0, allocation=9.0, seed=seed))
    last = sim.ledger.to_dict()
    for cls, n in requests:
        sim.provision_submit({"class_id": cls, "slots": n, "for_bundle": "b", "wall_hours": 0.5})
        sim.step(600)
        assert sim.queued + sim.running + sim.completed == len(sim.jobs)
        now = sim.ledger.to_dict()
        assert now["cloud_spend"] >= last["cloud_spend"] and now["hpc_hours_used"] >= last["hpc_hours_used"]
        last = now
        b = sim.budget_query()
        assert b["cloud_funds_remaining"] <= 7.0 - sim.ledger.cloud_spend + 1e-9
    for _ in range(20):
        sim.step(600)
    assert sim.ledger.cloud_spend <= 7.0 + 1e-9
    assert sim.ledger.hpc_hours_used <= 9.0 + 1e-9


def test_scenario_parsing(root):
    s = load_scenario(root / "scenarios" / "hybrid_facility.toml")
    assert s.total_jobs == 1400
    assert sorted(p.kind for p in s.providers) == ["cloud", "grid", "grid", "grid", "hpc"]
    assert s.epoch == 1514764800.0
    with pytest.raises(ConfigParseError):
        parse_scenario({"providers": [{"class_id": "x", "kind": "moon", "capacity": 1}]})
    with pytest.raises(ConfigParseError):
        parse_scenario({"providers": [], "job_waves": [{"count": 1, "preferred_resources": ["ghost"]}]})


def test_same_seed_same_history():
    grid = ProviderSpec("g", "grid", capacity=200, startup_latency=0, preemption_rate=0.4)
    runs = []
    for _ in range(2):
        sim = FacilitySim(scenario([grid], [JobWave(0, 150, JOB, ("g",))], seed=5))
        sim.provision_submit({"class_id": "g", "slots": 150, "for_bundle": "b", "wall_hours": 2.0})
        for _ in range(10):
            sim.step(900)
        runs.append((sim.preemptions, sim.completed, sim.ledger.to_dict()))
    assert runs[0] == runs[1]

import csv

import pytest

from decision_engine.dataspace import DataProduct
from decision_engine.errors import AdapterUnavailable, ParameterError
from decision_engine.sim import FacilitySim, SimAdapters, load_scenario
from decision_engine.stdlib import (
    PLUGINS,
    BudgetSource,
    CollapsedWorkerProvisioner,
    JobQueueSource,
    MetricsPublisher,
    ProvisionerStatusSource,
    ProvisionPublisher,
    ResourceManifestSource,
    bundle_id,
    group_jobs,
    standard_registry,
)


@pytest.fixture
def scenario(root):
    return load_scenario(root / "scenarios" / "hybrid_facility.toml")


@pytest.fixture
def adapters(scenario):
    return SimAdapters(FacilitySim(scenario))


def services(adapters, tmp_path=None, **extra):
    return {"endpoints": {"sim": adapters, **extra}, "output_dir": tmp_path, "epoch": 0.0}


def test_registry_has_all_plugins():
    assert standard_registry().names() == sorted(PLUGINS)


def test_empty_queue_gives_empty_list(scenario):
    sim = FacilitySim(scenario.with_(job_waves=()))
    out = JobQueueSource({}, services(SimAdapters(sim))).invoke({})
    assert out == {"idle_jobs": []}


def test_1400_jobs_three_bundles(scenario):
    sim = FacilitySim(scenario.with_(job_waves=tuple(w.__class__(0.0, w.count, w.requirements, w.preferred_resources) for w in scenario.job_waves)))
    bundles = JobQueueSource({}, services(SimAdapters(sim))).invoke({})["idle_jobs"]
    assert len(bundles) == 3
    assert sum(b["count"] for b in bundles) == 1400
    assert [b["bundle_id"] for b in bundles] == sorted(b["bundle_id"] for b in bundles)


def test_bundle_id_is_stable_and_order_sensitive():
    a = bundle_id({"cpus": 1, "wall_hours": 1.0}, ["x", "y"])
    assert a == bundle_id({"wall_hours": 1.0, "cpus": 1}, ("x", "y"))
    assert a != bundle_id({"cpus": 1, "wall_hours": 1.0}, ["y", "x"])
    jobs = [{"requirements": {"c": 1}, "preferred_resources": ["x"]}] * 3
    assert group_jobs(jobs)[0]["count"] == 3


def test_unreachable_adapter_raises(adapters):
    adapters.available = False
    with pytest.raises(AdapterUnavailable):
        JobQueueSource({}, services(adapters)).invoke({})


def test_missing_endpoint_is_parameter_error(adapters):
    with pytest.raises(ParameterError):
        JobQueueSource({"endpoint": "elsewhere"}, services(adapters))


def test_resource_manifest(adapters):
    adapters.sim.set_provider_state("grid_b", False)
    res = ResourceManifestSource({}, services(adapters)).invoke({})["resources"]
    assert len(res) == 5
    assert {r["kind"] for r in res} == {"cloud", "hpc", "grid"}
    assert next(r for r in res if r["class_id"] == "grid_b")["state"] == "down"
    assert adapters.submit({"class_id": "grid_c", "slots": 100, "for_bundle": "b"})["accepted"]
    full = next(r for r in ResourceManifestSource({}, services(adapters)).invoke({})["resources"] if r["class_id"] == "grid_c")
    assert full["current_occupancy"] == full["capacity_limit"] == 100


def test_budget_source_initial_and_zero(adapters, scenario):
    b = BudgetSource({}, services(adapters)).invoke({})["budget"]
    assert b["cloud_funds_remaining"] == 500.0
    assert b["hpc_allocation_remaining"] == 2000.0
    broke = SimAdapters(FacilitySim(scenario.with_(initial_funds=0.0)))
    b = BudgetSource({}, services(broke)).invoke({})["budget"]
    assert b["cloud_funds_remaining"] == 0.0 and b["hpc_allocation_remaining"] == 2000.0


def test_provisioner_status(adapters):
    adapters.submit({"class_id": "grid_a", "slots": 3, "for_bundle": "b"})
    adapters.sim.step(60)
    assert ProvisionerStatusSource({}, services(adapters)).invoke({})["running_slots"]["grid_a"] == 3


def plan(*reqs):
    return DataProduct("allocation_plan", [
        {"class_id": c, "slots": n, "for_bundle": "b-1", "wall_hours": 1.0, "justification": {}} for c, n in reqs
    ], "allocate")


def test_provision_publisher_accepts_all(adapters):
    pub = ProvisionPublisher({}, services(adapters))
    out = pub.invoke({"allocation_plan": plan(("aws_zone1", 2), ("nersc", 2), ("grid_a", 2))})
    receipts = out["provision_receipts"]
    assert len(receipts) == 3 and all(r["accepted"] for r in receipts)


class RejectBig:
    """Adapter that refuses anything above a size limit."""

    def __init__(self, limit):
        self.limit = limit

    def submit(self, request):
        if request["slots"] > self.limit:
            return {"accepted": False, "reason": f"more than {self.limit} slots"}
        return {"accepted": True, "reason": ""}

    def query_slots(self):
        return {}


def test_provision_publisher_records_rejection():
    pub = ProvisionPublisher({"endpoint": "picky"}, {"endpoints": {"picky": RejectBig(5)}})
    receipts = pub.invoke({"allocation_plan": plan(("a", 3), ("b", 50))})["provision_receipts"]
    assert [r["accepted"] for r in receipts] == [True, False]
    assert "more than 5" in receipts[1]["reason"]


def test_collapsed_provisioner_gets_one_total():
    stub = CollapsedWorkerProvisioner()
    pub = ProvisionPublisher(
        {"endpoint": "vc", "style": "collapsed", "worker_config": {"cores": 8}},
        {"endpoints": {"vc": stub}},
    )
    receipts = pub.invoke({"allocation_plan": plan(("a", 3), ("b", 4))})["provision_receipts"]
    assert stub.requests == [{"target_workers": 7, "worker_config": {"cores": 8}}]
    assert receipts[0]["accepted"] and stub.query_slots() == {"virtual_cluster": 7}


def test_provision_publisher_parameter_checks():
    assert ProvisionPublisher.check_parameters({"style": "nope"})
    with pytest.raises(ParameterError):
        ProvisionPublisher({"style": "collapsed"}, {"endpoints": {"sim": RejectBig(1)}})


def metrics_inputs(gen, funds, slots):
    return {
        "cycle": DataProduct("cycle", {"channel": "ch", "generation": gen, "started_at": 30.0 * gen}, "framework"),
        "idle_jobs": DataProduct("idle_jobs", [{"count": 4}, {"count": 6}], "s"),
        "running_slots": DataProduct("running_slots", slots, "s"),
        "budget": DataProduct("budget", {"cloud_funds_remaining": funds, "hpc_allocation_remaining": 10.0}, "s"),
    }


def test_metrics_publisher_rows(tmp_path):
    pub = MetricsPublisher({"directory": "m"}, {"output_dir": tmp_path, "epoch": 0.0})
    slots = {"a": 1, "b": 2, "c": 0}
    pub.invoke(metrics_inputs(0, 5.0, slots))
    rows = list(csv.reader(open(tmp_path / "m" / "ch.csv")))
    assert rows[0] == ["sim_time", "generation", "idle_jobs_total", "slots_a", "slots_b", "slots_c", "funds_remaining", "allocation_remaining"]
    assert rows[1] == ["0", "0", "10", "1", "2", "0", "5", "10"]
    pub.invoke(metrics_inputs(1, 4.5, slots))
    rows = list(csv.reader(open(tmp_path / "m" / "ch.csv")))
    assert len(rows) == 3 and rows.count(rows[0]) == 1
    assert all(len(r) == 5 + 3 for r in rows)

import threading
import time

import pytest

from decision_engine.clock import ManualClock, WallClock
from decision_engine.dataspace import DataSpace, read_archive
from decision_engine.diagnostics import DiagnosticsLog
from decision_engine.errors import FrameworkError, InvalidTransition, UnknownChannel, UnknownPlugin
from decision_engine.framework import ChannelState, assemble_channel, transform_order
from decision_engine.model import Defaults

import helpers as H


def boot(ch):
    ch.start()
    for name in ch.source_names():
        ch.run_source_once(name)
    assert ch.state is ChannelState.STEADY


def test_minimal_channel_assembles():
    cbs = {}
    cfg = H.counting_channel("c", cbs)
    ch = assemble_channel(cfg, H.registry(cbs), DataSpace(None, ManualClock(0)))
    assert ch.transform_order == ["double"]
    assert ch.state is ChannelState.BOOT


def test_transform_order_is_topological():
    specs = [
        H.transform("t2", ["a1"], ["a2"]),
        H.transform("t3", ["a2", "a1"], ["a3"]),
        H.transform("t1", ["x"], ["a1"]),
    ]
    assert transform_order(specs) == ["t1", "t2", "t3"]
    with pytest.raises(FrameworkError):
        transform_order([H.transform("a", ["q"], ["p"]), H.transform("b", ["p"], ["q"])])


def test_unknown_plugin():
    cfg = H.counting_channel("c", {})
    from decision_engine.plugins import PluginRegistry

    with pytest.raises(UnknownPlugin):
        assemble_channel(cfg, PluginRegistry(), DataSpace(None, ManualClock(0)))


def test_one_trigger_one_success():
    cbs, seen = {}, []
    eng = H.engine([H.counting_channel("c", cbs, seen)], cbs)
    ch = eng.channel("c")
    boot(ch)
    outcomes = ch.run_pending()
    assert [o.outcome for o in outcomes] == ["success"]
    assert seen == [2]
    assert [r.generation for r in ch.space.archive()] == [0]


def test_cycle_product_and_publisher_fidelity():
    cbs = {}
    eng = H.engine([H.counting_channel("c", cbs)], cbs)
    ch = eng.channel("c")
    boot(ch)
    o = ch.run_pending()[0]
    rec = ch.space.archive()[-1]
    assert rec.products["cycle"].value["generation"] == o.generation
    assert set(o.publishers_run) == set(rec.products["inference_result"].value["publishers_to_run"])


def test_source_loop_runs_periodically():
    cbs = {}
    calls = []
    cfg = H.counting_channel("c", cbs)
    inner = cbs["c.src"]
    cbs["c.src"] = lambda i: (calls.append(time.monotonic()), inner(i))[1]
    cfg = H.channel(
        "c",
        sources=[H.source("src", ["x"], "c.src", period=0.1)],
        transforms=cfg.transforms,
        facts={"positive": 'product("y") > 0'},
        rules=[("publish", 'fact("positive")', ["pub"])],
        publishers=cfg.publishers,
    )
    eng = H.engine([cfg], cbs, clock=WallClock())
    eng.start()
    time.sleep(0.35)
    eng.stop()
    assert len(calls) >= 3
    assert eng.channel("c").triggers >= len(calls)


def test_failing_source_fails_channel_after_budget():
    cbs = {"bad": lambda _: 1 / 0}
    cfg = H.channel(
        "c",
        sources=[H.source("bad", ["x"])],
        transforms=[H.transform("t", ["x"], ["y"], "bad")],
        facts={"f": "true"},
        rules=[("r", 'fact("f")', ["p"])],
        publishers=[H.publisher("p", (), "bad")],
    )
    ch = H.engine([cfg], cbs).channel("c")
    ch.start()
    for i in range(4):
        ch.run_source_once("bad")
        assert ch.state is ChannelState.BOOT
    ch.run_source_once("bad")
    assert ch.state is ChannelState.FAILED
    assert len(ch.diagnostics.events("source_error")) == 5


def test_failure_budget_counts_consecutive_only():
    n = {"i": 0}

    def flaky(_):
        n["i"] += 1
        if n["i"] % 5 == 0:
            return {"x": 1}
        raise RuntimeError("flaky")

    cbs = {"flaky": flaky, "t": lambda i: {"y": 1}, "p": lambda i: {}}
    cfg = H.channel(
        "c",
        sources=[H.source("flaky", ["x"])],
        transforms=[H.transform("t", ["x"], ["y"])],
        facts={"f": "true"},
        rules=[("r", 'fact("f")', ["p"])],
        publishers=[H.publisher("p")],
    )
    ch = H.engine([cfg], cbs).channel("c")
    ch.start()
    for _ in range(40):
        ch.run_source_once("flaky")
    assert ch.state is not ChannelState.FAILED


class Gate:
    """Blocks the transform until released so a cycle stays in flight."""

    def __init__(self):
        self.entered = threading.Event()
        self.release = threading.Event()
        self.active = 0
        self.max_active = 0
        self.lock = threading.Lock()

    def __call__(self, inputs):
        with self.lock:
            self.active += 1
            self.max_active = max(self.max_active, self.active)
        self.entered.set()
        self.release.wait(5)
        with self.lock:
            self.active -= 1
        return {"y": inputs["x"].value}


def gated_channel(gate):
    cbs = {"src": lambda _: {"x": 1}, "t": gate, "p": lambda i: {}}
    cfg = H.channel(
        "c",
        sources=[H.source("src", ["x"])],
        transforms=[H.transform("t", ["x"], ["y"])],
        facts={"f": 'product("y") >= 0'},
        rules=[("r", 'fact("f")', ["p"])],
        publishers=[H.publisher("p")],
    )
    return H.engine([cfg], cbs).channel("c")


def run_burst(ch, gate, triggers):
    gate.entered.clear()
    gate.release.clear()
    assert ch.signal()
    done = []
    worker = threading.Thread(target=lambda: done.extend(ch.run_pending()))
    worker.start()
    assert gate.entered.wait(5)
    for _ in range(triggers):
        assert ch.signal() is False
    assert ch.dirty
    gate.release.set()
    worker.join(5)
    return done


def test_rapid_triggers_during_slow_cycle_coalesce_to_one_follow_up():
    gate = Gate()
    ch = gated_channel(gate)
    boot(ch)
    ch.run_pending()
    done = run_burst(ch, gate, 10)
    assert len(done) == 2
    assert ch.max_in_flight == 1
    assert not ch.pending and not ch.dirty


def test_execute_cycle_refuses_while_in_flight():
    gate = Gate()
    ch = gated_channel(gate)
    boot(ch)
    ch.signal()
    t = threading.Thread(target=ch.run_pending)
    t.start()
    assert gate.entered.wait(5)
    with pytest.raises(InvalidTransition):
        ch.execute_cycle()
    gate.release.set()
    t.join(5)


def test_puts_during_cycle_stay_out_of_current_view():
    cbs = {}
    ch_ref = {}

    def t(inputs):
        ch_ref["ch"].space.put_value("x", 999, "intruder")
        return {"y": inputs["x"].value}

    cbs.update({"src": lambda _: {"x": 1}, "t": t, "p": lambda i: {}})
    cfg = H.channel(
        "c",
        sources=[H.source("src", ["x"])],
        transforms=[H.transform("t", ["x"], ["y"])],
        facts={"f": "true"},
        rules=[("r", 'fact("f")', ["p"])],
        publishers=[H.publisher("p")],
    )
    ch = H.engine([cfg], cbs).channel("c")
    ch_ref["ch"] = ch
    boot(ch)
    ch.run_pending()
    rec = ch.space.archive()[-1]
    assert rec.products["x"].value == 1 and rec.products["y"].value == 1
    assert ch.space.open_products()["x"].value == 999


def test_missing_product_gives_transform_error_then_recovers():
    state = {"b": False}

    def src(_):
        return {"a": 1, "b": 2} if state["b"] else {"a": 1}

    published = []
    cbs = {"src": src, "t": lambda i: {"c": i["b"].value}, "p": lambda i: published.append(1) or {}}
    cfg = H.channel(
        "c",
        sources=[H.source("src", ["a", "b"])],
        transforms=[H.transform("t", ["b"], ["c"])],
        facts={"f": "true"},
        rules=[("r", 'fact("f")', ["p"])],
        publishers=[H.publisher("p")],
    )
    ch = H.engine([cfg], cbs).channel("c")
    boot(ch)
    o = ch.run_pending()[0]
    assert o.outcome == "transform_error" and "b" in o.error
    assert published == []
    state["b"] = True
    ch.run_source_once("src")
    assert ch.run_pending()[0].outcome == "success"


def test_fact_and_publisher_errors_are_outcomes():
    cbs = {"src": lambda _: {"x": 0}, "t": lambda i: {"y": i["x"].value}, "p": lambda i: 1 / 0, "q": lambda i: {}}
    cfg = H.channel(
        "c",
        sources=[H.source("src", ["x"])],
        transforms=[H.transform("t", ["x"], ["y"])],
        facts={"f": 'product("y") / product("y") > 0', "g": "true"},
        rules=[("r", 'fact("g")', ["p", "q"])],
        publishers=[H.publisher("p"), H.publisher("q")],
    )
    ch = H.engine([cfg], cbs).channel("c")
    boot(ch)
    assert ch.run_pending()[0].outcome == "fact_error"
    cbs["src"] = lambda _: {"x": 1}
    ch.modules["src"].fn = cbs["src"]
    ch.run_source_once("src")
    o = ch.run_pending()[0]
    assert o.outcome == "publisher_error"
    assert o.publishers_run == ("p", "q")


def proxy_pair(staleness):
    cbs = {}
    a = H.counting_channel("a", cbs)
    cbs["b.t"] = lambda i: {"z": i["spot"].value}
    cbs["b.p"] = lambda i: {}
    b = H.channel(
        "b",
        proxies=[H.proxy("prices", "a", "y", "spot", staleness)],
        transforms=[H.transform("t", ["spot"], ["z"], "b.t")],
        facts={"f": "true"},
        rules=[("r", 'fact("f")', ["p"])],
        publishers=[H.publisher("p", (), "b.p")],
    )
    clock = ManualClock(100.0)
    return H.engine([a, b], cbs, clock=clock), clock


def test_source_proxy_relabels_with_provenance():
    eng, clock = proxy_pair(float("inf"))
    a, b = eng.channel("a"), eng.channel("b")
    boot(a)
    for _ in range(5):
        a.run_pending()
        a.run_source_once("src")
    # "y" last recorded in archived generation 4
    b.start()
    assert b.run_source_once("prices")
    spot = b.space.open_products()["spot"]
    assert dict(spot.origin) == {"channel": "a", "generation": 4}
    assert spot.produced_by == "prices"
    assert b.state is ChannelState.STEADY


def test_stale_proxy_keeps_channel_in_boot():
    eng, clock = proxy_pair(60.0)
    a, b = eng.channel("a"), eng.channel("b")
    boot(a)
    a.run_pending()
    clock.advance(61)
    b.start()
    assert not b.run_source_once("prices")
    assert b.state is ChannelState.BOOT
    assert b.unsatisfied_sources() == ["prices"]
    a.run_source_once("src")
    a.run_pending()
    assert b.run_source_once("prices")
    assert b.state is ChannelState.STEADY


def test_proxy_to_unknown_channel_fails_assembly():
    cbs = {"t": lambda i: {}, "p": lambda i: {}}
    cfg = H.channel(
        "b",
        proxies=[H.proxy("px", "ghost", "y", "spot")],
        transforms=[H.transform("t", ["spot"], ["z"])],
        facts={"f": "true"},
        rules=[("r", 'fact("f")', ["p"])],
        publishers=[H.publisher("p")],
    )
    with pytest.raises(UnknownChannel):
        H.engine([cfg], cbs)


def test_boot_timeout_fails_channel():
    cbs = {}
    cfg = H.counting_channel("c", cbs)
    clock = ManualClock(0.0)
    eng = H.engine([cfg], cbs, clock=clock, defaults=Defaults(boot_timeout=120))
    ch = eng.channel("c")
    ch.start()
    clock.advance(121)
    assert ch.check_boot_deadline()
    assert ch.state is ChannelState.FAILED
    assert "src" in ch.diagnostics.events("failed")[0].detail


def test_lifecycle_transitions():
    cbs = {}
    eng = H.engine([H.counting_channel("c", cbs)], cbs)
    ch = eng.channel("c")
    assert ch.start() is ChannelState.BOOT
    with pytest.raises(InvalidTransition):
        ch.start()
    ch.run_source_once("src")
    assert ch.state is ChannelState.STEADY
    assert ch.stop() is ChannelState.STOPPED
    with pytest.raises(InvalidTransition):
        ch.stop()
    assert ch.signal() is False
    assert ch.start() is ChannelState.BOOT
    assert ch.status()["state"] == "boot"


def test_stop_during_cycle_drains_and_leaves_others_alone():
    gate = Gate()
    ch = gated_channel(gate)
    boot(ch)
    ch.signal()
    t = threading.Thread(target=ch.run_pending)
    t.start()
    assert gate.entered.wait(5)
    stopper = threading.Thread(target=ch.stop)
    stopper.start()
    time.sleep(0.05)
    assert ch.state is ChannelState.STOPPING
    gate.release.set()
    stopper.join(5)
    t.join(5)
    assert ch.state is ChannelState.STOPPED
    assert [o.outcome for o in ch.outcomes] == ["success"]


def test_threaded_two_channels_one_stopped(tmp_path):
    cbs = {}
    cfgs = [H.counting_channel("a", cbs), H.counting_channel("b", cbs)]
    cfgs = [
        H.channel(c.channel_id, sources=[H.source("src", ["x"], f"{c.channel_id}.src", period=0.01)],
                  transforms=c.transforms, facts={"positive": 'product("y") > 0'},
                  rules=[("publish", 'fact("positive")', ["pub"])], publishers=c.publishers)
        for c in cfgs
    ]
    eng = H.engine(cfgs, cbs, clock=WallClock(), archive_dir=tmp_path)
    eng.start()
    time.sleep(0.2)
    eng.stop("a")
    stopped_at = eng.channel("a").cycle_count
    b_before = eng.channel("b").cycle_count
    time.sleep(0.2)
    assert eng.channel("a").cycle_count == stopped_at
    assert eng.channel("b").cycle_count > b_before
    eng.stop()
    for cid in "ab":
        gens = [r.generation for r in read_archive(tmp_path / f"{cid}.jsonl")]
        assert gens == list(range(len(gens)))


def test_diagnostics_line_format(caplog):
    import logging

    log = DiagnosticsLog("chan", ManualClock(0.0))
    with caplog.at_level(logging.INFO, logger="decision_engine"):
        log.emit(logging.WARNING, "mod", "source_error", "boom")
    from decision_engine.diagnostics import DiagFormatter

    line = DiagFormatter().format(caplog.records[-1])
    assert line.split(" ", 5)[1:] == ["WARNING", "chan", "mod", "source_error", "boom"]

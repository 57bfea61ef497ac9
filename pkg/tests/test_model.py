"""Core type and validation behavior."""

import pytest

from tsnmcs.errors import CapacityExceeded, InvalidReference
from tsnmcs.model import (Criticality, Link, PlacementPlan, Resources,
                          ServiceSpec, StreamSpec, Topology, VNodeSpec,
                          free_resources, link_id, path_connects,
                          plan_feasible, split_capacity, validate_topology)

from conftest import ring_topology, video_services


def test_resources_arithmetic():
    a = Resources(1000, 1024)
    b = Resources(400, 512)
    assert a.plus(b) == Resources(1400, 1536)
    assert a.minus(b) == Resources(600, 512)
    assert b.fits_in(a)
    assert not a.fits_in(b)


def test_resources_reject_negative():
    with pytest.raises(ValueError):
        Resources(-1, 0)
    with pytest.raises(CapacityExceeded):
        Resources(100, 100).minus(Resources(200, 0))


def test_link_id_is_order_independent():
    assert link_id("TSN3", "TSN1") == "TSN1-TSN3"
    assert link_id("TSN1", "TSN3") == "TSN1-TSN3"
    assert Link("TSN3", "TSN1", 10).id == "TSN1-TSN3"


def test_stream_spec_rejects_degenerate():
    with pytest.raises(ValueError):
        StreamSpec("s", "a", "a", 100, 100, True)
    with pytest.raises(ValueError):
        StreamSpec("s", "a", "b", 0, 100, True)


def test_split_capacity_half():
    crit, non_crit = split_capacity(Resources(4000, 4096), 0.5)
    assert crit == Resources(2000, 2048)
    assert non_crit == Resources(2000, 2048)
    crit, non_crit = split_capacity(Resources(1001, 1025), 0.5)
    assert crit.plus(non_crit) == Resources(1001, 1025)


def test_split_capacity_none_means_shared():
    cap = Resources(4000, 4096)
    assert split_capacity(cap, None) == (cap, cap)


def test_split_capacity_range_check():
    with pytest.raises(ValueError):
        split_capacity(Resources(100, 100), 1.5)


def test_validate_topology_clean_ring():
    assert validate_topology(ring_topology()) == []


def test_validate_topology_unknown_endpoint():
    t = ring_topology()
    t.links.append(Link("TSN1", "TSN9", 10))
    assert "UnknownEndpoint(TSN9)" in validate_topology(t)


def test_validate_topology_disconnected():
    t = Topology(
        bridges=["TSN1", "TSN2"],
        vnodes=[VNodeSpec("VNode1", Resources(1000, 1024), "TSN1")],
        links=[],
        supervisor_attachment="TSN1")
    assert validate_topology(t) == ["Disconnected"]


def test_validate_topology_self_and_duplicate_links():
    t = ring_topology()
    t.links.append(Link("TSN1", "TSN1", 10))
    t.links.append(Link("TSN3", "TSN1", 10))
    violations = validate_topology(t)
    assert "SelfLink(TSN1)" in violations
    assert "DuplicateLink(TSN1-TSN3)" in violations


def test_validate_topology_bad_latency_and_attachments():
    t = ring_topology()
    t.links[0] = Link("TSN1", "TSN2", 0)
    t.vnodes.append(VNodeSpec("VNode4", Resources(1, 1), "TSN9"))
    violations = validate_topology(t)
    assert "BadLatency(TSN1-TSN2)" in violations
    assert "UnknownAttachment(VNode4->TSN9)" in violations


def test_free_resources():
    cap = Resources(4000, 4096)
    deployed = [
        ServiceSpec("a", Criticality.CRITICAL, Resources(1000, 1024)),
        ServiceSpec("b", Criticality.CRITICAL, Resources(500, 512)),
    ]
    assert free_resources(cap, deployed) == Resources(2500, 2560)
    assert free_resources(cap, []) == cap
    with pytest.raises(CapacityExceeded):
        free_resources(Resources(1000, 1024),
                       [ServiceSpec("c", Criticality.CRITICAL,
                                    Resources(2000, 512))])


def test_free_resources_monotone():
    cap = Resources(4000, 4096)
    deployed = []
    prev = free_resources(cap, deployed)
    for i in range(5):
        deployed.append(ServiceSpec(f"s{i}", Criticality.CRITICAL,
                                    Resources(100 * i, 64 * i)))
        cur = free_resources(cap, deployed)
        assert cur.cpu_millicores <= prev.cpu_millicores
        assert cur.memory_mib <= prev.memory_mib
        prev = cur


def test_path_connects():
    t = ring_topology()
    assert path_connects(t, ["TSN1-TSN3"], "TSN1", "TSN3")
    assert path_connects(t, ["TSN1-TSN2", "TSN2-TSN3"], "TSN1", "TSN3")
    assert not path_connects(t, ["TSN2-TSN3"], "TSN1", "TSN3")
    assert path_connects(t, [], "TSN1", "TSN1")
    with pytest.raises(InvalidReference):
        path_connects(t, ["TSN1-TSN9"], "TSN1", "TSN3")


def test_plan_feasible_ring_routing():
    t = ring_topology()
    services, streams = video_services()
    plan = PlacementPlan(
        assignment={"video-send": "VNode1", "video-recv": "VNode3",
                    "telemetry": "VNode2"},
        routing={"video": [["TSN1-TSN3"], ["TSN1-TSN2", "TSN2-TSN3"]]})
    assert plan_feasible(plan, t, services, streams)


def test_plan_feasible_rejects_overcommit():
    t = Topology(
        bridges=["TSN1"],
        vnodes=[VNodeSpec("VNode1", Resources(1000, 1024), "TSN1")],
        links=[],
        supervisor_attachment="TSN1")
    services = [
        ServiceSpec("a", Criticality.CRITICAL, Resources(600, 512)),
        ServiceSpec("b", Criticality.CRITICAL, Resources(600, 512)),
    ]
    plan = PlacementPlan(assignment={"a": "VNode1", "b": "VNode1"}, routing={})
    assert not plan_feasible(plan, t, services, [])


def test_plan_feasible_rejects_shared_link_redundancy():
    t = ring_topology()
    services, streams = video_services()
    plan = PlacementPlan(
        assignment={"video-send": "VNode1", "video-recv": "VNode3",
                    "telemetry": "VNode2"},
        routing={"video": [["TSN1-TSN3"], ["TSN1-TSN3"]]})
    assert not plan_feasible(plan, t, services, streams)


def test_plan_feasible_rejects_primary_on_standby_node():
    t = ring_topology()
    services = [ServiceSpec("a", Criticality.CRITICAL, Resources(100, 100),
                            standby_on="VNode2")]
    plan = PlacementPlan(assignment={"a": "VNode2"}, routing={})
    assert not plan_feasible(plan, t, services, [])


def test_plan_feasible_counts_standby_reservations():
    t = Topology(
        bridges=["TSN1"],
        vnodes=[VNodeSpec("VNode1", Resources(1000, 1024), "TSN1"),
                VNodeSpec("VNode2", Resources(1000, 1024), "TSN1")],
        links=[],
        supervisor_attachment="TSN1")
    services = [
        ServiceSpec("a", Criticality.CRITICAL, Resources(600, 512),
                    standby_on="VNode2"),
        ServiceSpec("b", Criticality.CRITICAL, Resources(600, 512)),
    ]
    plan = PlacementPlan(assignment={"a": "VNode1", "b": "VNode2"}, routing={})
    assert not plan_feasible(plan, t, services, [])


def test_plan_feasible_same_bridge_redundant_stream():
    t = ring_topology()
    services = [
        ServiceSpec("src", Criticality.CRITICAL, Resources(100, 100)),
        ServiceSpec("dst", Criticality.CRITICAL, Resources(100, 100)),
    ]
    streams = [StreamSpec("s", "src", "dst", 1000, 100, redundant=True)]
    good = PlacementPlan(assignment={"src": "VNode1", "dst": "VNode2"},
                         routing={"s": [[]]})
    assert plan_feasible(good, t, services, streams)
    bad = PlacementPlan(assignment={"src": "VNode1", "dst": "VNode2"},
                        routing={"s": [["TSN1-TSN2"], ["TSN1-TSN3"]]})
    assert not plan_feasible(bad, t, services, streams)


def test_plan_feasible_raises_on_unknown_ids():
    t = ring_topology()
    services, streams = video_services()
    with pytest.raises(InvalidReference):
        plan_feasible(PlacementPlan(assignment={"ghost": "VNode1"}, routing={}),
                      t, services, streams)
    with pytest.raises(InvalidReference):
        plan_feasible(PlacementPlan(assignment={"telemetry": "VNode9"},
                                    routing={}), t, services, streams)


def test_plan_feasible_stable_under_permutation():
    t = ring_topology()
    services, streams = video_services()
    plan = PlacementPlan(
        assignment={"video-send": "VNode1", "video-recv": "VNode3",
                    "telemetry": "VNode2"},
        routing={"video": [["TSN1-TSN2", "TSN2-TSN3"], ["TSN1-TSN3"]]})
    assert plan_feasible(plan, t, services, streams) == \
        plan_feasible(plan, t, list(reversed(services)), streams)

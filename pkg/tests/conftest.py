"""Shared builders for tests: small topologies and service sets."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tsnmcs.model import (Criticality, Link, Resources, ServiceSpec,
                          StreamSpec, Topology, VNodeSpec)


def ring_topology(critical_fraction=0.5, latency_us=10,
                  attachment_latency_us=10) -> Topology:
    """Three bridges in a ring; two nodes on the first bridge, one on the third."""
    return Topology(
        bridges=["TSN1", "TSN2", "TSN3"],
        vnodes=[
            VNodeSpec("VNode1", Resources(4000, 4096), "TSN1"),
            VNodeSpec("VNode2", Resources(4000, 4096), "TSN1"),
            VNodeSpec("VNode3", Resources(4000, 4096), "TSN3"),
        ],
        links=[
            Link("TSN1", "TSN2", latency_us),
            Link("TSN2", "TSN3", latency_us),
            Link("TSN1", "TSN3", latency_us),
        ],
        supervisor_attachment="TSN2",
        attacker_attachment="TSN2",
        monitor_attachment="TSN2",
        attachment_latency_us=attachment_latency_us,
        critical_fraction=critical_fraction)


def video_services():
    services = [
        ServiceSpec("video-send", Criticality.CRITICAL, Resources(600, 512),
                    pinned_on="VNode1"),
        ServiceSpec("video-recv", Criticality.CRITICAL, Resources(400, 384),
                    pinned_on="VNode3"),
        ServiceSpec("telemetry", Criticality.NON_CRITICAL, Resources(200, 256)),
    ]
    streams = [StreamSpec("video", "video-send", "video-recv",
                          period_us=10_000, payload_bytes=1400,
                          redundant=True)]
    return services, streams


@pytest.fixture
def ring():
    return ring_topology()

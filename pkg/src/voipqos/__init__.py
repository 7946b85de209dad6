"""Discrete-event simulation of router queuing disciplines and their effect on VoIP QoS."""

from .backend import AVAILABLE as BACKENDS
from .backend import simulate
from .metrics import ItuThresholds, QosReport, Verdict, build_report
from .qdisc import Discipline, QdiscConfig
from .scenario import ScenarioConfig, load_scenario, two_site_topology, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "BACKENDS",
    "Discipline",
    "ItuThresholds",
    "QdiscConfig",
    "QosReport",
    "ScenarioConfig",
    "Verdict",
    "build_report",
    "load_scenario",
    "two_site_topology",
    "parse_scenario",
    "simulate",
]

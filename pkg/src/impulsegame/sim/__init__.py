"""Feedback policies and forward simulation."""

from impulsegame.sim.policy import Decision, NodeDecision, PolicyField, extract_policy, write_policy_csv
from impulsegame.sim.simulate import (
    ImpulseEvent,
    TrajectoryRecord,
    replay,
    simulate,
    write_trajectory_csv,
    write_trajectory_summary,
)

__all__ = [
    "Decision",
    "ImpulseEvent",
    "NodeDecision",
    "PolicyField",
    "TrajectoryRecord",
    "extract_policy",
    "replay",
    "simulate",
    "write_policy_csv",
    "write_trajectory_csv",
    "write_trajectory_summary",
]

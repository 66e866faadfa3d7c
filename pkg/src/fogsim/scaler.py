"""Scale-target selection.

When a master is saturated and knows no other master to forward to, it
picks one of its registered actors to host a brand-new master. The pick
minimises the user-to-actor link latency and, among equally close
actors, maximises a headroom score (idle CPU fraction times clock rate).
Earlier-registered actors win remaining ties.
"""
from __future__ import annotations

from dataclasses import dataclass

from .protocol import Address, HostProfile

__all__ = ["ScaleCandidate", "headroom_score", "select_scale_target"]


@dataclass(frozen=True)
class ScaleCandidate:
    """One registered actor as seen by the scaler."""

    address: Address
    profile: HostProfile
    latency_ms: float


def headroom_score(profile: HostProfile) -> float:
    """Idle-capacity score of a host: (1 - cpu_util) * cpu_freq_ghz."""
    return (1.0 - profile.cpu_util) * profile.cpu_freq_ghz


def select_scale_target(candidates: list[ScaleCandidate]) -> ScaleCandidate:
    """Pick the actor that should spawn a new master.

    Scans candidates in registration order keeping the current best.
    A candidate with strictly lower latency always wins; at equal
    latency it must have a strictly higher headroom score, so the
    earliest candidate wins exact ties.
    """
    if not candidates:
        raise ValueError("select_scale_target needs at least one candidate")
    best = candidates[0]
    best_score = headroom_score(best.profile)
    for cand in candidates[1:]:
        if cand.latency_ms > best.latency_ms:
            continue
        score = headroom_score(cand.profile)
        if cand.latency_ms == best.latency_ms and score <= best_score:
            continue
        best = cand
        best_score = score
    return best

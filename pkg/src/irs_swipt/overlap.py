"""Max-min throughput solver with overlapping user groups.

Allowing every information user into every slot makes the binary grouping
variables redundant: any feasible grouped design maps to an ungrouped one
with identical throughput by zeroing the beamformers of unassigned pairs.
The solver therefore runs the continuous machinery with all pairs active
(no binary penalty, no big-M coupling; the rank-one penalty is retained)
and recovers the grouping afterwards from beamformer support.
"""

from __future__ import annotations

import numpy as np

from .feasibility import FeasibilityReport
from .model import ChannelSet, DesignSolution, PhaseStats, SystemConfig
from .nonoverlap import solve_frozen_grouping

__all__ = ["solve_p2prime", "recover_grouping"]


def support_threshold(cfg: SystemConfig) -> float:
    """Beamformer-power level below which a pair counts as unassigned."""
    return 1e-8 * cfg.P * cfg.T / cfg.L


def recover_grouping(design: DesignSolution, cfg: SystemConfig) -> np.ndarray:
    """Binary grouping from beamformer support: a = 1 iff ||w||^2 is
    above the power-relative threshold.  Zeroing w where a = 0 leaves the
    throughput unchanged."""
    power = np.sum(np.abs(design.w) ** 2, axis=2)
    return (power > support_threshold(cfg)).astype(float)


def solve_p2prime(channels: ChannelSet, stats: PhaseStats, cfg: SystemConfig,
                  feas: FeasibilityReport | None = None) -> DesignSolution:
    """Overlapping-group solver; returns the design with the recovered
    support grouping and overlap statistics in ``meta``."""
    from .metrics import expected_metrics
    from .nonoverlap import exact_feasibility_audit

    mask = np.ones((cfg.K, cfg.L))
    design = solve_frozen_grouping(channels, stats, cfg, mask=mask, feas=feas)
    a_rec = recover_grouping(design, cfg)
    design.w = design.w * a_rec[:, :, None]
    design.a = a_rec
    rep = expected_metrics(design, channels, stats, cfg)
    design.eta = rep.eta_min
    design.meta["metrics"] = rep
    design.meta["audit"] = exact_feasibility_audit(
        design, channels, stats, cfg, require_nonoverlap=False
    )
    design.meta["scheme"] = "overlap"
    design.meta["overlap_users"] = int(np.sum(a_rec.sum(axis=1) >= 2))
    design.meta["sum_assignments"] = float(a_rec.sum())
    return design

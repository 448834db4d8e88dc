"""Benchmark schemes sharing the main solvers' machinery.

Random grouping freezes a uniformly drawn binary assignment; the no-grouping
baseline serves every information user in a single full-length slot; the
non-robust wrapper re-runs any solver with the no-error phase statistics and
audits the returned design under the true error statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feasibility import FeasibilityReport
from .metrics import expected_metrics
from .model import ChannelSet, DesignSolution, PhaseStats, SystemConfig, phase_error_moment_matrix
from .nonoverlap import InfeasibleInstanceError, SolverFailure, solve_frozen_grouping

__all__ = [
    "random_ug_solve",
    "no_ug_solve",
    "nonrobust_variant",
    "NonRobustAudit",
    "zero_design",
]

_MAX_REDRAWS = 20


def zero_design(cfg: SystemConfig, reason: str) -> DesignSolution:
    """All-zero design with eta = 0; the infeasible-scheme convention."""
    d = DesignSolution(
        a=np.zeros((cfg.K, cfg.L)),
        tau=np.zeros(cfg.L),
        w=np.zeros((cfg.K, cfg.L, cfg.M), dtype=complex),
        W_E=np.zeros((cfg.L, cfg.M, cfg.M), dtype=complex),
        v=np.ones((cfg.L, cfg.N + 1), dtype=complex),
        eta=0.0,
    )
    d.meta.update(infeasible_baseline=True, reason=reason)
    return d


def random_ug_solve(channels: ChannelSet, stats: PhaseStats, cfg: SystemConfig,
                    rng_seed: int, feas: FeasibilityReport | None = None,
                    scheme: str = "nonoverlap") -> DesignSolution:
    """Freeze the grouping at a random draw and optimize the rest.

    ``scheme="nonoverlap"`` assigns each IU to one uniformly drawn slot;
    ``scheme="overlap"`` draws every bit uniformly from {0, 1}.  Draws
    leaving some IU with no slot are redrawn (their max-min throughput is
    zero by construction); after 20 redraws the scheme is reported
    infeasible with eta = 0.
    """
    rng = np.random.default_rng(rng_seed)
    for attempt in range(_MAX_REDRAWS):
        if scheme == "nonoverlap":
            mask = np.zeros((cfg.K, cfg.L))
            mask[np.arange(cfg.K), rng.integers(0, cfg.L, size=cfg.K)] = 1.0
        elif scheme == "overlap":
            mask = rng.integers(0, 2, size=(cfg.K, cfg.L)).astype(float)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        if np.any(mask.sum(axis=1) == 0):
            continue
        try:
            design = solve_frozen_grouping(channels, stats, cfg, mask=mask, feas=feas)
        except (InfeasibleInstanceError, SolverFailure) as exc:
            design = zero_design(cfg, f"frozen solve failed: {exc}")
            design.meta["scheme"] = "random"
            return design
        design.meta["scheme"] = "random"
        design.meta["redraws"] = attempt
        design.meta["random_scheme"] = scheme
        return design
    design = zero_design(cfg, "no admissible random grouping in 20 draws")
    design.meta["scheme"] = "random"
    return design


def no_ug_solve(channels: ChannelSet, stats: PhaseStats, cfg: SystemConfig,
                feas: FeasibilityReport | None = None) -> DesignSolution:
    """Single-slot baseline: one group with every IU, full frame duration.

    The feasibility design of the multi-slot configuration does not carry
    over (different slot count), so the single-slot check is rerun here.
    """
    del feas
    cfg1 = cfg.replace(L=1)
    mask = np.ones((cfg.K, 1))
    try:
        design = solve_frozen_grouping(channels, stats, cfg1, mask=mask,
                                       pin_tau_full=True)
    except (InfeasibleInstanceError, SolverFailure) as exc:
        design = zero_design(cfg1, f"single-slot solve failed: {exc}")
    design.meta["scheme"] = "noug"
    return design


@dataclass
class NonRobustAudit:
    design: DesignSolution
    realized_energy: np.ndarray     # expected EU energy under the true statistics
    realized_throughput: np.ndarray
    realized_eta: float
    eh_violation: bool              # any EU below the requirement under truth


def nonrobust_variant(solver, channels: ChannelSet, cfg: SystemConfig,
                      **solver_kwargs) -> NonRobustAudit:
    """Run ``solver`` with the no-error statistics, then audit under truth.

    ``solver`` is called as solver(channels, stats, cfg, **solver_kwargs)
    and must return a DesignSolution.  The realized metrics evaluate the
    returned design under the robust phase-error statistics.
    """
    naive = phase_error_moment_matrix(cfg.N, robust=False)
    truth = phase_error_moment_matrix(cfg.N, robust=True)
    design = solver(channels, naive, cfg, **solver_kwargs)
    rep = expected_metrics(design, channels, truth, cfg)
    violation = bool(channels.J > 0 and rep.energy.min() < cfg.E - 1e-9)
    return NonRobustAudit(
        design=design,
        realized_energy=rep.energy,
        realized_throughput=rep.throughput,
        realized_eta=rep.eta_min,
        eh_violation=violation,
    )

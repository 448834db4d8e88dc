"""Energy-requirement feasibility check.

Maximizes the minimum harvested energy over energy covariances, time
shares, and reflect vectors by alternating an exact SDP block with an SCA
reflect block.  The instance is declared feasible the moment the objective
reaches the per-user requirement E; if the alternation converges below E
the verdict is infeasible (heuristic: the method is a local ascent, not a
certificate).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import Aff, ProblemBuilder
from .model import ChannelSet, PhaseStats, SystemConfig, effective_matrix, quad_lift
from .surrogates import quad_form_lb_coeffs

__all__ = [
    "EnergyDesign",
    "FeasibilityReport",
    "solve_energy_time_sdp",
    "reflect_energy_sca",
    "check_feasibility",
]


@dataclass
class EnergyDesign:
    """Energy-only design: time-scaled covariances, shares, reflect vectors."""

    S_E: np.ndarray        # (L, M, M) time-scaled energy covariances
    tau: np.ndarray        # (L,)
    v: np.ndarray          # (L, N+1)
    delta: float           # attained min energy (J)

    def recover_covariances(self) -> np.ndarray:
        """Per-second covariances W_E = S_E / tau (zero for idle slots)."""
        w = np.zeros_like(self.S_E)
        for ell, t in enumerate(self.tau):
            if t > 0.0:
                w[ell] = self.S_E[ell] / t
        return w


@dataclass
class FeasibilityReport:
    feasible: bool
    heuristic: bool          # True when the verdict rests on local convergence
    design: EnergyDesign
    trace: list = field(default_factory=list)   # delta per half-iteration
    meta: dict = field(default_factory=dict)


def _y_matrices(channels: ChannelSet, stats: PhaseStats, v: np.ndarray) -> np.ndarray:
    J, L = channels.J, v.shape[0]
    m = channels.M
    y = np.empty((J, L, m, m), dtype=complex)
    for j in range(J):
        for ell in range(L):
            y[j, ell] = effective_matrix(channels.G[j], v[ell], stats)
    return y


def solve_energy_time_sdp(channels: ChannelSet, stats: PhaseStats, v: np.ndarray,
                          cfg: SystemConfig, power_share: float = 1.0,
                          tau_min: float = 0.0, fix_tau: bool = False):
    """Exact SDP block: optimal (S_E, tau) for fixed reflect vectors.

    ``power_share`` caps per-slot power at power_share * P (used to reserve
    headroom when constructing warm starts); ``tau_min`` keeps every slot
    alive; ``fix_tau`` pins the shares at T/L instead of optimizing them.
    Returns (S_E, tau, delta, status).
    """
    L, M = cfg.L, cfg.M
    if channels.J == 0:
        return (np.zeros((L, M, M), dtype=complex), np.full(L, cfg.T / L),
                np.inf, "optimal")
    y = _y_matrices(channels, stats, v)
    scale = max(
        max(float(np.linalg.eigvalsh(y[j, ell]).max())
            for j in range(channels.J) for ell in range(L)) * cfg.P * cfg.T,
        1e-300,
    )

    b = ProblemBuilder()
    delta = b.free("delta")[0]
    if fix_tau:
        tau_aff = [Aff.constant(cfg.T / L) for _ in range(L)]
    else:
        tau = b.nonneg("tau", L)
        b.add_le(tau.sum(), cfg.T)
        tau_aff = [tau[ell] for ell in range(L)]
    se = [b.herm_psd(f"SE_{ell}", M) for ell in range(L)]
    for ell in range(L):
        if tau_min > 0.0 and not fix_tau:
            b.add_ge0(tau_aff[ell] - tau_min)
        b.add_le(se[ell].trace_with(np.eye(M, dtype=complex) / cfg.P),
                 tau_aff[ell] * power_share)
    for j in range(channels.J):
        parts = [se[ell].trace_with(y[j, ell] / scale) for ell in range(L)]
        b.add_ge0(Aff.total(parts) - delta)
    b.maximize(delta)

    sol = conic.solve(b.build(), tol=cfg.conic_tol, max_iter=cfg.conic_max_iter)
    if not sol.ok:
        sol = conic.solve(b.build(), tol=cfg.conic_tol_relaxed,
                          max_iter=2 * cfg.conic_max_iter)
    if not sol.ok:
        return None, None, -np.inf, sol.status
    s_e = np.stack([sol.values[f"SE_{ell}"] for ell in range(L)])
    tau_v = (np.full(L, cfg.T / L) if fix_tau
             else np.maximum(sol.values["tau"], 0.0))
    return s_e, tau_v, float(sol.values["delta"][0]) * scale, "optimal"


def _exact_delta(channels: ChannelSet, stats: PhaseStats, v: np.ndarray,
                 s_e: np.ndarray) -> float:
    """min_j sum_l tr(Y_jl S_El), recomputed exactly."""
    y = _y_matrices(channels, stats, v)
    vals = [
        sum(float(np.real(np.trace(y[j, ell] @ s_e[ell]))) for ell in range(v.shape[0]))
        for j in range(channels.J)
    ]
    return min(vals) if vals else np.inf


def reflect_energy_sca(channels: ChannelSet, stats: PhaseStats, s_e: np.ndarray,
                       tau: np.ndarray, v_init: np.ndarray, cfg: SystemConfig):
    """SCA block: ascend the min harvested energy over reflect vectors.

    Uses tangent minorants of the lifted quadratic forms, so the exact
    objective is non-decreasing across iterations.  Returns (v, delta,
    trace).
    """
    J, L, N = channels.J, v_init.shape[0], channels.N
    floor = cfg.slot_floor_frac * cfg.T
    live = [ell for ell in range(L) if tau[ell] > floor]
    v = v_init.copy()
    if J == 0 or N == 0 or not live:
        return v, _exact_delta(channels, stats, v, s_e), []

    # lift per-second covariances; slot weight tau multiplies the quad form
    q_mats = np.zeros((J, L, N + 1, N + 1), dtype=complex)
    total = 0.0
    for ell in live:
        w_e = s_e[ell] / tau[ell]
        for j in range(J):
            q_mats[j, ell] = quad_lift(channels.G[j], w_e, stats, scale=cfg.P)
            total += np.abs(q_mats[j, ell]).max()
    if total == 0.0:
        return v, _exact_delta(channels, stats, v, s_e), []
    scale = max(
        max(float(np.linalg.eigvalsh(q_mats[j, ell]).max()) * tau[ell] * (N + 1)
            for j in range(J) for ell in live),
        1e-300,
    )

    trace = [_exact_delta(channels, stats, v, s_e)]
    for _ in range(cfg.max_sca_iter):
        b = ProblemBuilder()
        delta = b.free("delta")[0]
        re_v = {ell: b.free(f"re_v_{ell}", N) for ell in live}
        im_v = {ell: b.free(f"im_v_{ell}", N) for ell in live}
        for ell in live:
            for n in range(N):
                b.add_soc([Aff.constant(1.0), re_v[ell][n], im_v[ell][n]])
        for j in range(J):
            parts = []
            for ell in live:
                c_vec, const = quad_form_lb_coeffs(
                    q_mats[j, ell] * (tau[ell] / scale), v[ell]
                )
                lin = [re_v[ell][n] * float(np.real(c_vec[n])) for n in range(N)]
                lin += [im_v[ell][n] * float(np.imag(c_vec[n])) for n in range(N)]
                parts.append(Aff.total(lin) + float(np.real(c_vec[N])) + const)
            b.add_ge0(Aff.total(parts) - delta)
        b.maximize(delta)
        sol = conic.solve(b.build(), tol=cfg.conic_tol, max_iter=cfg.conic_max_iter)
        if not sol.ok:
            break
        for ell in live:
            v[ell, :N] = sol.values[f"re_v_{ell}"] + 1j * sol.values[f"im_v_{ell}"]
            v[ell, N] = 1.0
        trace.append(_exact_delta(channels, stats, v, s_e))
        if (trace[-1] - trace[-2]) / max(abs(trace[-2]), 1e-300) < cfg.eps1:
            break
    return v, trace[-1], trace


def check_feasibility(channels: ChannelSet, stats: PhaseStats, cfg: SystemConfig,
                      run_to_convergence: bool = False) -> FeasibilityReport:
    """Alternate the two blocks; feasible the moment delta reaches E.

    With ``run_to_convergence`` the early exit is disabled and the
    converged maximum min-energy is reported.  The returned design carries
    unit-modulus reflect vectors (idle slots keep their initial value); its
    covariances and time shares are re-optimized once at the projected
    vectors so the reported delta is exact for the output design.
    """
    L, N = cfg.L, cfg.N
    v = np.ones((L, N + 1), dtype=complex)
    if channels.J == 0:
        design = EnergyDesign(
            S_E=np.zeros((L, cfg.M, cfg.M), dtype=complex),
            tau=np.full(L, cfg.T / L), v=v, delta=np.inf,
        )
        return FeasibilityReport(feasible=True, heuristic=False, design=design,
                                 trace=[], meta={"note": "no energy users"})

    trace: list[float] = []
    s_e = np.zeros((L, cfg.M, cfg.M), dtype=complex)
    tau = np.full(L, cfg.T / L)
    hit = False
    prev = None
    for _ in range(cfg.max_feas_outer):
        s_e_new, tau_new, delta1, status = solve_energy_time_sdp(channels, stats, v, cfg)
        if status != "optimal":
            break
        s_e, tau = s_e_new, tau_new
        trace.append(delta1)
        if not run_to_convergence and delta1 >= cfg.E:
            hit = True
            break
        v, delta2, _ = reflect_energy_sca(channels, stats, s_e, tau, v, cfg)
        trace.append(delta2)
        if not run_to_convergence and delta2 >= cfg.E:
            hit = True
            break
        if prev is not None and (delta2 - prev) / max(abs(prev), 1e-300) < cfg.eps1:
            break
        prev = delta2

    # project to unit modulus on live slots, then re-optimize (S_E, tau) once
    floor = cfg.slot_floor_frac * cfg.T
    for ell in range(L):
        if tau[ell] > floor:
            mags = np.abs(v[ell])
            v[ell] = np.where(mags > 0, v[ell] / np.where(mags > 0, mags, 1.0), 1.0)
            v[ell, -1] = 1.0
    s_e2, tau2, delta_final, status = solve_energy_time_sdp(channels, stats, v, cfg)
    if status == "optimal":
        s_e, tau = s_e2, tau2
    else:
        delta_final = _exact_delta(channels, stats, v, s_e)

    design = EnergyDesign(S_E=s_e, tau=tau, v=v, delta=float(delta_final))
    feasible = hit or (delta_final >= cfg.E)
    return FeasibilityReport(
        feasible=feasible,
        heuristic=not feasible,
        design=design,
        trace=trace,
        meta={"early_exit": hit, "delta_final": float(delta_final)},
    )

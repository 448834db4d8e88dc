"""Penalty functions and first-order convex/concave bounds for the SCA loops.

Every bound here satisfies the standard contract: minorants never exceed
the true function, majorants never fall below it, and both touch at the
expansion point.  Functions are pure; affine forms are returned as plain
coefficient tuples so the conic builders can consume them directly and the
audit tests can evaluate them numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import spectral_norm_top

__all__ = [
    "ExpansionPoint",
    "binary_penalty",
    "square_lb",
    "binary_penalty_ub_coeffs",
    "log_interference",
    "log_interference_ub_coeffs",
    "rank_penalty",
    "rank_penalty_ub_matrix",
    "quad_form",
    "quad_form_lb",
    "quad_form_lb_coeffs",
    "sinr_fraction_lb_coeffs",
]

_LN2 = float(np.log(2.0))


@dataclass
class ExpansionPoint:
    """Local point for one SCA iteration of the transmit/reflect solvers."""

    Stilde: np.ndarray        # (K, L, M, M) time-scaled per-user covariances
    S_E: np.ndarray           # (L, M, M) time-scaled energy covariances
    tau: np.ndarray           # (L,) slot durations
    a: np.ndarray             # (K, L) grouping values in [0, 1]
    v: np.ndarray | None = None     # (L, N+1) reflect vectors
    lam: np.ndarray | None = None   # (K, L) positive SINR values


# -- binary penalty ---------------------------------------------------------


def binary_penalty(a: np.ndarray, tol: float = 1e-9) -> float:
    """sum of a(1-a); zero exactly on binary points."""
    a = np.asarray(a, dtype=float)
    if a.size and (a.min() < -tol or a.max() > 1.0 + tol):
        raise ValueError("grouping values must lie in [0, 1]")
    return float(np.sum(a - a * a))


def square_lb(a: float, a_r: float) -> float:
    """Tangent lower bound of a^2 at a_r."""
    return -a_r * a_r + 2.0 * a_r * a


def binary_penalty_ub_coeffs(a_r: np.ndarray) -> tuple[np.ndarray, float]:
    """Affine majorant of :func:`binary_penalty` at a_r.

    Returns (lin, const) with  h_ub(a) = lin . a + const >= h(a),
    equality at a = a_r.
    """
    a_r = np.asarray(a_r, dtype=float)
    return 1.0 - 2.0 * a_r, float(np.sum(a_r * a_r))


# -- perspective-log rate terms ----------------------------------------------


def log_interference(interf: float, tau: float, sigma2: float) -> float:
    """tau * log2(interf/tau + sigma2); the concave interference-rate term."""
    if tau <= 0.0:
        raise ValueError("tau must be positive for exact evaluation")
    if interf < 0.0:
        interf = 0.0
    return tau * np.log2(interf / tau + sigma2)


def log_interference_ub_coeffs(interf_r: float, tau_r: float,
                               sigma2: float) -> tuple[float, float, float]:
    """Affine majorant coefficients of :func:`log_interference` at a point.

    Returns (c_i, c_tau, const) such that
    ``const + c_i * interf + c_tau * tau`` upper-bounds the term globally and
    touches it at (interf_r, tau_r).  The expansion ratio is floored at
    sigma2 to guard the divisions when the point carries zero interference.
    """
    if tau_r <= 0.0:
        raise ValueError("expansion point requires tau_r > 0")
    ups = max(interf_r, 0.0) / tau_r + sigma2
    ups = max(ups, sigma2)
    c_i = 1.0 / (ups * _LN2)
    c_tau = np.log2(ups) - (ups - sigma2) / (ups * _LN2)
    const = tau_r * np.log2(ups) - c_i * max(interf_r, 0.0) - c_tau * tau_r
    return c_i, float(c_tau), float(const)


# -- rank penalty -------------------------------------------------------------


def rank_penalty(mats) -> float:
    """sum of tr(S) - ||S||_2 over PSD matrices; zero iff all rank <= 1."""
    total = 0.0
    for s in mats:
        norm, _ = spectral_norm_top(s, psd_hint=True)
        total += float(np.real(np.trace(s))) - norm
    return max(total, 0.0)


def rank_penalty_ub_matrix(s_r: np.ndarray) -> tuple[np.ndarray, float]:
    """Affine majorant of one tr - specnorm term, linearized at s_r.

    Returns (C, const) with  q_ub(S) = tr(C S) + const, where C = I - u u^H
    for the top eigenvector u of s_r.  Majorizes tr(S) - ||S||_2 with
    equality at S = s_r.
    """
    norm, u = spectral_norm_top(s_r, psd_hint=True)
    c = np.eye(s_r.shape[0], dtype=complex) - np.outer(u, u.conj())
    const = float(np.real(u.conj() @ s_r @ u)) - norm
    return c, const


# -- reflect-side quadratic bounds --------------------------------------------


def quad_form(q: np.ndarray, v: np.ndarray) -> float:
    return float(np.real(v.conj() @ q @ v))


def quad_form_lb(q: np.ndarray, v: np.ndarray, v_q: np.ndarray) -> float:
    """Tangent minorant of v^H Q v at v_q (Q PSD)."""
    return float(2.0 * np.real(v.conj() @ q @ v_q) - np.real(v_q.conj() @ q @ v_q))


def quad_form_lb_coeffs(q: np.ndarray, v_q: np.ndarray) -> tuple[np.ndarray, float]:
    """(c, const) with minorant = Re{v^H c} + const."""
    c = 2.0 * (q @ v_q)
    const = -float(np.real(v_q.conj() @ q @ v_q))
    return c, const


def sinr_fraction_lb_coeffs(c_mat: np.ndarray, v_q: np.ndarray, tau: float,
                            lam_q: float) -> tuple[np.ndarray, float]:
    """Joint tangent minorant of (v^H C v / tau) / lam at (v_q, lam_q).

    Returns (c_v, c_lam) so the bound reads Re{v^H c_v} + c_lam * lam; it
    never exceeds the true fraction for C PSD, lam > 0, and touches it at
    the expansion point.
    """
    if tau <= 0.0 or lam_q <= 0.0:
        raise ValueError("requires tau > 0 and lam_q > 0")
    c_v = 2.0 * (c_mat @ v_q) / (tau * lam_q)
    c_lam = -float(np.real(v_q.conj() @ c_mat @ v_q)) / (tau * lam_q * lam_q)
    return c_v, c_lam

"""Ground-truth evaluation: closed-form expected metrics, Monte Carlo
phase-error sampling, and a brute-force grouping oracle.

The closed-form path evaluates the expected SINR and expected harvested
energy of a design; the sampling path draws explicit phase-error
realizations and averages the pre-expectation expressions, which is the
primary numerical cross-check between the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .model import ChannelSet, DesignSolution, PhaseStats, SystemConfig, effective_matrix

__all__ = [
    "MetricsReport",
    "SampledMetrics",
    "expected_metrics",
    "sampled_metrics",
    "brute_force_grouping_oracle",
    "OracleTable",
]


@dataclass
class MetricsReport:
    throughput: np.ndarray       # (K,) expected throughput, bits
    eta_min: float               # min over IUs
    energy: np.ndarray           # (J,) expected harvested energy, joules
    eh_margin: float             # min_j energy_j - E  (inf when J = 0)
    power: np.ndarray            # (L,) per-slot transmit power, watts
    tau_total: float
    active_slots: int
    sum_assignments: float
    gamma: np.ndarray            # (K, L) expected SINR per slot
    extra: dict = field(default_factory=dict)


def _slot_gamma(a: np.ndarray, w: np.ndarray, w_e: np.ndarray, x_mats: np.ndarray,
                sigma2: float) -> np.ndarray:
    """Expected SINR of every IU in one slot (k-th row uses X_k)."""
    k_total = a.shape[0]
    gains = np.empty((k_total, k_total))
    for k in range(k_total):
        gains[k] = np.real(np.einsum("im,mn,in->i", w.conj(), x_mats[k], w))
    sig = a * np.diag(gains)
    interf = gains @ a - sig
    noise_e = np.array(
        [np.real(np.trace(x_mats[k] @ w_e)) for k in range(k_total)]
    )
    return sig / (interf + noise_e + sigma2)


def expected_metrics(sol: DesignSolution, channels: ChannelSet, stats: PhaseStats,
                     cfg: SystemConfig) -> MetricsReport:
    """Closed-form expected throughput/energy of a design; deterministic."""
    K, J, L = channels.K, channels.J, sol.tau.shape[0]
    if sol.a.shape != (K, L) or sol.w.shape[:2] != (K, L):
        raise ValueError("solution shapes do not match the channel set")
    gamma = np.zeros((K, L))
    throughput = np.zeros(K)
    energy = np.zeros(J)
    power = np.zeros(L)
    for ell in range(L):
        tau = float(sol.tau[ell])
        w_e = sol.W_E[ell]
        w_slot = sol.w[:, ell, :]
        a_slot = sol.a[:, ell].astype(float)
        power[ell] = float(
            np.sum(a_slot * np.real(np.einsum("km,km->k", w_slot.conj(), w_slot)))
            + np.real(np.trace(w_e))
        )
        if tau <= 0.0:
            continue
        x_mats = np.stack([
            effective_matrix(channels.H[k], sol.v[ell], stats) for k in range(K)
        ])
        gamma[:, ell] = _slot_gamma(a_slot, w_slot, w_e, x_mats, cfg.sigma2)
        throughput += tau * np.log2(1.0 + gamma[:, ell])
        for j in range(J):
            y = effective_matrix(channels.G[j], sol.v[ell], stats)
            beam = float(np.sum(
                a_slot * np.real(np.einsum("km,mn,kn->k", w_slot.conj(), y, w_slot))
            ))
            energy[j] += tau * (beam + float(np.real(np.trace(y @ w_e))))
    eh_margin = float(energy.min() - cfg.E) if J > 0 else np.inf
    return MetricsReport(
        throughput=throughput,
        eta_min=float(throughput.min()) if K > 0 else 0.0,
        energy=energy,
        eh_margin=eh_margin,
        power=power,
        tau_total=float(sol.tau.sum()),
        active_slots=int(np.sum(sol.tau > cfg.slot_floor_frac * cfg.T)),
        sum_assignments=float(sol.a.sum()),
        gamma=gamma,
    )


# ---------------------------------------------------------------------------
# Monte Carlo evaluation under explicit phase errors
# ---------------------------------------------------------------------------


@dataclass
class SampledMetrics:
    mean_gamma: np.ndarray       # (K, L) sample mean of the per-slot SINR
    se_gamma: np.ndarray
    energy: np.ndarray           # (J,) sample mean of total harvested energy
    se_energy: np.ndarray
    throughput_log_mean: np.ndarray   # (K,) sum_l tau_l * E{log2(1+gamma)}
    se_throughput_log: np.ndarray
    throughput_mean_gamma: np.ndarray  # (K,) sum_l tau_l * log2(1+E{gamma})
    n_samples: int
    eta_log_mean: float
    eta_mean_gamma: float


def sampled_metrics(sol: DesignSolution, channels: ChannelSet, cfg: SystemConfig,
                    n_samples: int, rng_seed: int, error_width: float = 1.0,
                    chunk: int = 4096) -> SampledMetrics:
    """Monte Carlo metrics with phase errors drawn uniformly on
    [-pi/2, pi/2] * error_width, i.i.d. per slot and element.

    Sampling uses counter-based (Philox) streams keyed by the chunk start
    index, so results are bit-stable for a given seed regardless of chunk
    scheduling.  Both the expectation-inside-log throughput (optimized by
    the solvers) and the sampled E{log(1+gamma)} throughput are reported.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    K, J, L, N = channels.K, channels.J, sol.tau.shape[0], channels.N
    sum_g = np.zeros((K, L))
    sum_g2 = np.zeros((K, L))
    sum_r = np.zeros((K, L))
    sum_r2 = np.zeros((K, L))
    sum_q = np.zeros(J)
    sum_q2 = np.zeros(J)

    active = [ell for ell in range(L) if sol.tau[ell] > 0.0]
    w_all = sol.w * sol.a[:, :, None]

    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        bitgen = np.random.Philox(key=rng_seed)
        bitgen.advance(done * max(L * N, 1) * 4)
        rng = np.random.Generator(bitgen)
        theta = rng.uniform(-np.pi / 2, np.pi / 2, size=(size, L, N)) * error_width
        q_tot = np.zeros((size, J))
        for ell in active:
            verr = np.concatenate(
                [np.exp(-1j * theta[:, ell, :]), np.ones((size, 1))], axis=1
            )
            ve = verr * sol.v[ell][None, :]
            gam = np.empty((size, K))
            for k in range(K):
                rows = ve.conj() @ channels.H[k]              # (size, M)
                amp2 = np.abs(rows @ w_all[:, ell, :].T) ** 2  # (size, K)
                sig = amp2[:, k]
                interf = amp2.sum(axis=1) - sig
                epow = np.real(
                    np.einsum("sm,mn,sn->s", rows, sol.W_E[ell], rows.conj())
                )
                gam[:, k] = sig / (interf + epow + cfg.sigma2)
            rate = np.log2(1.0 + gam)
            sum_g[:, ell] += gam.sum(axis=0)
            sum_g2[:, ell] += (gam ** 2).sum(axis=0)
            sum_r[:, ell] += rate.sum(axis=0)
            sum_r2[:, ell] += (rate ** 2).sum(axis=0)
            for j in range(J):
                rows = ve.conj() @ channels.G[j]
                amp2 = np.abs(rows @ w_all[:, ell, :].T) ** 2
                epow = np.real(
                    np.einsum("sm,mn,sn->s", rows, sol.W_E[ell], rows.conj())
                )
                q_tot[:, j] += sol.tau[ell] * (amp2.sum(axis=1) + epow)
        sum_q += q_tot.sum(axis=0)
        sum_q2 += (q_tot ** 2).sum(axis=0)
        done += size

    n = float(n_samples)

    def mean_se(s1, s2):
        mean = s1 / n
        var = np.maximum(s2 / n - mean**2, 0.0)
        return mean, np.sqrt(var / n)

    mg, seg = mean_se(sum_g, sum_g2)
    mr, ser = mean_se(sum_r, sum_r2)
    mq, seq = mean_se(sum_q, sum_q2)
    tau = sol.tau
    t_log = mr @ tau
    se_t_log = np.sqrt((ser ** 2) @ (tau ** 2))
    t_mean = np.log2(1.0 + mg) @ tau
    return SampledMetrics(
        mean_gamma=mg,
        se_gamma=seg,
        energy=mq,
        se_energy=seq,
        throughput_log_mean=t_log,
        se_throughput_log=se_t_log,
        throughput_mean_gamma=t_mean,
        n_samples=n_samples,
        eta_log_mean=float(t_log.min()) if K else 0.0,
        eta_mean_gamma=float(t_mean.min()) if K else 0.0,
    )


# ---------------------------------------------------------------------------
# brute-force grouping oracle
# ---------------------------------------------------------------------------


@dataclass
class OracleTable:
    masks: list                  # binary (K, L) candidates, enumeration order
    values: np.ndarray           # attained min-throughput per candidate
    best_mask: np.ndarray
    best_value: float
    scheme: str


def _enumerate_masks(K: int, L: int, scheme: str):
    if scheme == "nonoverlap":
        for assign in product(range(L + 1), repeat=K):
            mask = np.zeros((K, L))
            for k, g in enumerate(assign):
                if g > 0:
                    mask[k, g - 1] = 1.0
            yield mask
    elif scheme == "overlap":
        for bits in product((0.0, 1.0), repeat=K * L):
            yield np.array(bits).reshape(K, L)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")


def brute_force_grouping_oracle(channels: ChannelSet, stats: PhaseStats,
                                cfg: SystemConfig,
                                scheme: str = "nonoverlap") -> OracleTable:
    """Enumerate all grouping candidates and optimize the continuous
    variables for each; independent reference for the grouping solvers.

    Budget-guarded: requires K <= 4 and L <= 2.
    """
    from .feasibility import check_feasibility
    from .nonoverlap import solve_frozen_grouping

    if cfg.K > 4 or cfg.L > 2:
        raise ValueError("oracle budget exceeded: requires K <= 4 and L <= 2")
    feas = check_feasibility(channels, stats, cfg) if cfg.J > 0 else None
    masks, values = [], []
    for mask in _enumerate_masks(cfg.K, cfg.L, scheme):
        masks.append(mask)
        if mask.sum() == 0:
            values.append(0.0)
            continue
        try:
            sol = solve_frozen_grouping(channels, stats, cfg, mask=mask, feas=feas)
            values.append(float(sol.eta))
        except Exception:
            values.append(0.0)
    values = np.asarray(values)
    best = int(np.argmax(values))
    return OracleTable(
        masks=masks,
        values=values,
        best_mask=masks[best],
        best_value=float(values[best]),
        scheme=scheme,
    )

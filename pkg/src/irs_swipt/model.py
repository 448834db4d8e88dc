"""Scenario construction: configuration, channel generation, phase-error
statistics, and the effective/lifted matrices used by every solver.

Composite channels have shape (N+1, M): rows 1..N hold the cascaded link
diag(h_r^H) F and the last row holds the direct link h_d^H.  The reflect
vector v has N tunable unit-modulus entries plus a fixed trailing 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import eig_hermitian, hermitize

__all__ = [
    "SystemConfig",
    "ChannelSet",
    "PhaseStats",
    "DesignSolution",
    "generate_channels",
    "phase_error_moment_matrix",
    "effective_matrix",
    "quad_lift",
    "dbm_to_watt",
    "db_to_linear",
]


def dbm_to_watt(x_dbm: float) -> float:
    return 10.0 ** (x_dbm / 10.0) / 1000.0


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass
class SystemConfig:
    """All scenario scalars and algorithm knobs.

    Power quantities are linear (watts / joules); path loss and the Rician
    factor are in dB.  Defaults follow the full-scale simulation profile;
    :meth:`desk` gives a small profile sized for CI runs.
    """

    M: int = 4                      # AP antennas
    N: int = 40                     # IRS elements
    K: int = 4                      # information users
    J: int = 8                      # energy users
    L: int = 3                      # max number of groups / time slots
    P: float = dbm_to_watt(43.0)    # transmit power budget (W)
    T: float = 1.0                  # frame duration (s)
    E: float = 1e-5                 # per-EU harvested-energy requirement (J)
    sigma2: float = dbm_to_watt(-80.0)   # receiver noise power (W), same for all IUs

    # large-scale fading: PL(d) = c0 / d^alpha
    c0_db: float = -30.0
    alpha_direct: float = 3.5
    alpha_irs: float = 2.2
    rician_db: float = 3.0

    # 3-D geometry (meters); users drawn uniformly in z=0 disks
    ap_pos: tuple = (3.0, 0.0, 0.0)
    irs_pos: tuple = (0.0, 8.0, 0.0)
    iu_center: tuple = (3.0, 50.0, 0.0)
    iu_radius: float = 2.0
    eu_center: tuple = (3.0, 8.0, 0.0)
    eu_radius: float = 2.0

    # algorithm tolerances and penalty schedule
    eps1: float = 1e-4              # inner SCA fractional-increase threshold
    eps2: float = 1e-4              # BCD fractional-increase threshold
    varsigma1: float = 1e-7         # rank-penalty exit threshold on q
    varsigma2: float = 1e-7         # binary-penalty exit threshold on h
    rho0: float = 1e-2              # initial binary-penalty weight
    mu0: float = 1e-2               # initial rank-penalty weight
    c1: float = 10.0                # rank-penalty growth factor
    c2: float = 10.0                # binary-penalty growth factor

    # iteration caps (safety bounds, generous at default tolerances)
    max_sca_iter: int = 40
    max_bcd_iter: int = 20
    max_penalty_rounds: int = 12
    max_feas_outer: int = 30

    # conic backend
    conic_tol: float = 1e-8
    conic_tol_relaxed: float = 5e-7
    conic_max_iter: int = 200

    # numeric floors
    slot_floor_frac: float = 1e-6   # tau below slot_floor_frac*T freezes a slot
    lambda_floor: float = 1e-8      # SINR expansion-point floor

    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.P < 0 or self.T <= 0 or self.E < 0 or self.L < 1:
            raise ValueError("require P >= 0, T > 0, E >= 0, L >= 1")
        if min(self.M, self.K) < 1 or min(self.N, self.J) < 0:
            raise ValueError("counts must be nonnegative (M, K >= 1)")
        if self.sigma2 <= 0:
            raise ValueError("noise power must be positive")
        if not (self.K + self.J > self.M and self.K >= self.M):
            warnings.warn(
                f"not an overloaded scenario (K={self.K}, J={self.J}, M={self.M}); "
                "baselines may still be run underloaded",
                stacklevel=2,
            )

    @classmethod
    def desk(cls, **overrides) -> "SystemConfig":
        """Small profile (CI-speed): M=2, N=8, K=4, J=2, L=2."""
        base = dict(M=2, N=8, K=4, J=2, L=2, E=2e-6)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    @property
    def rician_kappa(self) -> float:
        return db_to_linear(self.rician_db)

    def path_loss(self, d: float, alpha: float) -> float:
        return db_to_linear(self.c0_db) / d**alpha


@dataclass(frozen=True)
class ChannelSet:
    """Composite channels per user: H[k], G[j] of shape (N+1, M)."""

    H: np.ndarray   # (K, N+1, M) complex
    G: np.ndarray   # (J, N+1, M) complex

    def __post_init__(self):
        if not (np.all(np.isfinite(self.H.view(float)))
                and np.all(np.isfinite(self.G.view(float)))):
            raise ValueError("channel matrices contain non-finite entries")

    @property
    def K(self) -> int:
        return self.H.shape[0]

    @property
    def J(self) -> int:
        return self.G.shape[0]

    @property
    def N(self) -> int:
        return self.H.shape[1] - 1

    @property
    def M(self) -> int:
        return self.H.shape[2]


@dataclass(frozen=True)
class PhaseStats:
    """Second-moment matrix of the random reflect distortion.

    ``robust=True`` uses the uniform-phase-error moments (inter-element
    coherence 4/pi^2, element-to-direct coherence 2/pi); ``robust=False``
    is the no-error model (all-ones matrix).
    """

    Z: np.ndarray
    robust: bool

    @property
    def N(self) -> int:
        return self.Z.shape[0] - 1


def phase_error_moment_matrix(N: int, robust: bool = True) -> PhaseStats:
    if N < 0:
        raise ValueError("N must be >= 0")
    n1 = N + 1
    if not robust:
        return PhaseStats(np.ones((n1, n1)), robust=False)
    z = np.full((n1, n1), 4.0 / np.pi**2)
    z[:, -1] = 2.0 / np.pi
    z[-1, :] = 2.0 / np.pi
    np.fill_diagonal(z, 1.0)
    return PhaseStats(z, robust=True)


# ---------------------------------------------------------------------------
# channel generation
# ---------------------------------------------------------------------------


def _ula_response(n: int, cos_angle: float) -> np.ndarray:
    """Half-wavelength uniform linear array response along the x-axis."""
    return np.exp(1j * np.pi * np.arange(n) * cos_angle)


def _cos_x(src: np.ndarray, dst: np.ndarray) -> float:
    d = dst - src
    return float(d[0] / np.linalg.norm(d))


def _cn(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _disk_points(rng: np.random.Generator, center: np.ndarray, radius: float,
                 count: int) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=count))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=count)
    pts = np.tile(center, (count, 1))
    pts[:, 0] += r * np.cos(phi)
    pts[:, 1] += r * np.sin(phi)
    return pts


def generate_channels(cfg: SystemConfig, rng_seed: int) -> ChannelSet:
    """Draw one channel realization; bit-identical for a fixed seed.

    Direct links are Rayleigh with exponent ``alpha_direct``; AP-IRS and
    IRS-user links are Rician with the configured factor and exponent
    ``alpha_irs``.  Line-of-sight components use half-wavelength ULA
    responses at the AP and the IRS (both along the x-axis), a fixed
    modeling convention.
    """
    rng = np.random.default_rng(rng_seed)
    ap = np.asarray(cfg.ap_pos, dtype=float)
    irs = np.asarray(cfg.irs_pos, dtype=float)
    iu_pos = _disk_points(rng, np.asarray(cfg.iu_center, dtype=float), cfg.iu_radius, cfg.K)
    eu_pos = _disk_points(rng, np.asarray(cfg.eu_center, dtype=float), cfg.eu_radius, cfg.J)

    kap = cfg.rician_kappa
    los_w = np.sqrt(kap / (1.0 + kap))
    nlos_w = np.sqrt(1.0 / (1.0 + kap))

    def rician(n_rx: int, n_tx: int, gain: float, a_rx: np.ndarray,
               a_tx: np.ndarray) -> np.ndarray:
        los = np.outer(a_rx, a_tx.conj())
        return np.sqrt(gain) * (los_w * los + nlos_w * _cn(rng, n_rx, n_tx))

    # AP -> IRS
    g_ap_irs = cfg.path_loss(np.linalg.norm(irs - ap), cfg.alpha_irs)
    f_mat = rician(
        cfg.N, cfg.M, g_ap_irs,
        _ula_response(cfg.N, _cos_x(ap, irs)),
        _ula_response(cfg.M, _cos_x(ap, irs)),
    ) if cfg.N > 0 else np.zeros((0, cfg.M), dtype=complex)

    def composite(pos: np.ndarray) -> np.ndarray:
        g_direct = cfg.path_loss(np.linalg.norm(pos - ap), cfg.alpha_direct)
        h_d = np.sqrt(g_direct) * _cn(rng, cfg.M)
        if cfg.N > 0:
            g_ru = cfg.path_loss(np.linalg.norm(pos - irs), cfg.alpha_irs)
            h_r = rician(cfg.N, 1, g_ru, _ula_response(cfg.N, _cos_x(irs, pos)),
                         np.ones(1))[:, 0]
            cascade = np.diag(h_r.conj()) @ f_mat
        else:
            cascade = np.zeros((0, cfg.M), dtype=complex)
        return np.vstack([cascade, h_d.conj()[None, :]])

    h = np.stack([composite(iu_pos[k]) for k in range(cfg.K)]) if cfg.K else \
        np.zeros((0, cfg.N + 1, cfg.M), dtype=complex)
    g = np.stack([composite(eu_pos[j]) for j in range(cfg.J)]) if cfg.J else \
        np.zeros((0, cfg.N + 1, cfg.M), dtype=complex)
    return ChannelSet(H=h, G=g)


# ---------------------------------------------------------------------------
# effective and lifted matrices
# ---------------------------------------------------------------------------


def effective_matrix(channel: np.ndarray, v: np.ndarray, stats: PhaseStats) -> np.ndarray:
    """Expected effective channel Gram matrix channel^H diag(v) Z diag(v)^H channel.

    Requires the trailing reflect entry to have unit modulus.  The result is
    Hermitian, and PSD whenever Z is.
    """
    channel = np.asarray(channel)
    v = np.asarray(v, dtype=complex)
    n1 = channel.shape[0]
    if v.shape != (n1,) or stats.Z.shape != (n1, n1):
        raise ValueError("shape mismatch between channel, v and Z")
    if not np.all(np.isfinite(v.view(float))) or abs(abs(v[-1]) - 1.0) > 1e-9:
        raise ValueError("reflect vector must be finite with unit trailing entry")
    p = stats.Z * np.outer(v, v.conj())
    return hermitize(channel.conj().T @ p @ channel)


def quad_lift(channel: np.ndarray, covariance: np.ndarray, stats: PhaseStats,
              psd_tol: float = 1e-7, scale: float | None = None) -> np.ndarray:
    """Lift a transmit covariance into reflect space.

    Returns the (N+1)x(N+1) Hermitian PSD matrix Q with
    ``v^H Q v = tr(effective_matrix(channel, v, stats) @ covariance)`` for
    every v with unit trailing entry.  Equals Z hadamard (channel W
    channel^H), which coincides with the eigenvector-by-eigenvector
    construction; a zero covariance yields the zero matrix.

    The PSD precondition is enforced up to ``psd_tol`` relative to the
    covariance magnitude, or to ``scale`` when given (callers pass the
    ambient power scale so near-zero solver iterates are not rejected for
    round-off); negative eigenvalues within tolerance are clipped.
    """
    channel = np.asarray(channel)
    w = hermitize(np.asarray(covariance, dtype=complex))
    if w.shape != (channel.shape[1], channel.shape[1]):
        raise ValueError("covariance dimension must match channel columns")
    lam, u = eig_hermitian(w)
    ref = max(float(np.real(np.trace(w))), float(np.abs(lam).max(initial=0.0)))
    if scale is not None:
        ref = max(ref, scale)
    if lam[-1] < -psd_tol * max(ref, 1e-300):
        raise ValueError(f"covariance not PSD: min eigenvalue {lam[-1]:.3e}")
    lam = np.clip(lam, 0.0, None)
    w = hermitize((u * lam) @ u.conj().T)
    q = stats.Z * (channel @ w @ channel.conj().T)
    return hermitize(q)


@dataclass
class DesignSolution:
    """A complete transmit/reflect design in original variables."""

    a: np.ndarray          # (K, L) binary grouping
    tau: np.ndarray        # (L,) slot durations
    w: np.ndarray          # (K, L, M) information beamformers
    W_E: np.ndarray        # (L, M, M) energy covariances
    v: np.ndarray          # (L, N+1) reflect vectors
    eta: float = np.nan    # attained min expected throughput (bits)
    meta: dict = field(default_factory=dict)

    @property
    def shapes(self) -> tuple:
        return self.a.shape, self.tau.shape, self.w.shape, self.W_E.shape, self.v.shape

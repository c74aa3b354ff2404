"""Discrete-time PH/PH/1 queue of a device, one transition per Tx cycle.

Packets arrive deterministically every ``t_a`` cycles (absorbing chain that
counts cycles) and depart after ``m`` segment successes, each cycle's
attempt succeeding independently with the segment success probability.  The
level process (queue length, segments left, cycles since last arrival) is a
quasi-birth-death chain; its stationary distribution follows from the
minimal nonnegative rate matrix, solved by cyclic reduction with plain
value iteration kept as an independent cross-check.

Delay bookkeeping: a packet's sojourn is counted from the cycle boundary at
which it joins the queue to the boundary at which its last segment departs,
which is the clock Little's law ties to the mean queue length (a lone
packet with sure success occupies exactly ``m`` cycles).  The sojourn
distribution is the queueing wait (published matrix recursion over the
number of packets ahead) convolved with the packet's own service time,
which is negative binomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import accel
from .accel import njit
from .errors import ConfigError, NumericError, UnstableModelError

RATE_RESIDUAL_TOL = 1e-12
NULLSPACE_CLAMP = 1e-14
PMF_TAIL_TOL = 1e-9
PMF_MAX_DELAY = 10_000


# ---------------------------------------------------------------------------
# phase-type building blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhDistribution:
    """Absorption-time law (initial vector, transient matrix, exit vector)."""

    alpha: np.ndarray     # (k,) initial distribution over transient phases
    transient: np.ndarray  # (k, k)
    absorb: np.ndarray    # (k,) exit rates to absorption

    def __post_init__(self):
        k = self.alpha.shape[0]
        if self.transient.shape != (k, k) or self.absorb.shape != (k,):
            raise ConfigError("phase-type dimensions are inconsistent")
        rows = self.transient.sum(axis=1) + self.absorb
        if not np.allclose(rows, 1.0, atol=1e-12):
            raise ConfigError("transient rows plus exit column must sum to 1")

    @property
    def order(self):
        return self.alpha.shape[0]

    def mean_absorption_time(self):
        k = self.order
        return float(self.alpha @ np.linalg.solve(np.eye(k) - self.transient, np.ones(k)))

    def absorption_pmf(self, n_max):
        """P{absorption at step j} for j = 1..n_max."""
        out = np.empty(n_max)
        v = self.alpha.copy()
        for j in range(n_max):
            out[j] = v @ self.absorb
            v = v @ self.transient
        return out


def build_arrival_ph(t_a: int) -> PhDistribution:
    """Deterministic inter-arrival of exactly ``t_a`` cycles."""
    if t_a < 1 or int(t_a) != t_a:
        raise ConfigError(f"arrival period must be a positive integer, got {t_a}")
    t_a = int(t_a)
    k = np.eye(t_a, k=1)
    absorb = np.zeros(t_a)
    absorb[-1] = 1.0
    alpha = np.zeros(t_a)
    alpha[0] = 1.0
    return PhDistribution(alpha=alpha, transient=k, absorb=absorb)


def build_departure_ph(m: int, p: float) -> PhDistribution:
    """Service of ``m`` segments, one attempt per cycle succeeding w.p. ``p``.

    The absorption time is negative binomial: the number of cycles needed
    for ``m`` successes, with mean ``m / p``.
    """
    if m < 1 or int(m) != m:
        raise ConfigError(f"segment count must be a positive integer, got {m}")
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"segment success probability must be in (0, 1], got {p}")
    m = int(m)
    s_mat = np.eye(m) * (1.0 - p) + np.eye(m, k=1) * p
    absorb = np.zeros(m)
    absorb[-1] = p
    beta = np.zeros(m)
    beta[0] = 1.0
    return PhDistribution(alpha=beta, transient=s_mat, absorb=absorb)


# ---------------------------------------------------------------------------
# QBD assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QbdModel:
    """Level-independent QBD blocks for the PH/PH/1 device queue.

    State within a level is (cycles since last arrival) x (segments left);
    ``b``/``c`` govern the empty level, ``e`` the drop to it, and
    ``a0``/``a1``/``a2`` the up/local/down transitions of busy levels.
    """

    b: np.ndarray
    c: np.ndarray
    e: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    m: int
    t_a: int
    p: float

    @property
    def phase_dim(self):
        return self.a0.shape[0]


def build_qbd(arrival: PhDistribution, departure: PhDistribution) -> QbdModel:
    k_mat = arrival.transient
    k_abs = arrival.absorb[:, None]
    alpha = arrival.alpha[None, :]
    s_mat = departure.transient
    s_abs = departure.absorb[:, None]
    beta = departure.alpha[None, :]

    k_alpha = k_abs @ alpha
    s_beta = s_abs @ beta

    b = k_mat
    c = np.kron(k_alpha, beta)
    e = np.kron(k_mat, s_abs)
    a0 = np.kron(k_alpha, s_mat)
    a1 = np.kron(k_alpha, s_beta) + np.kron(k_mat, s_mat)
    a2 = np.kron(k_mat, s_beta)

    t_a, m = arrival.order, departure.order
    if a0.shape != (m * t_a, m * t_a) or c.shape != (t_a, m * t_a) or e.shape != (m * t_a, t_a):
        raise NumericError("QBD block dimensions are inconsistent")
    if not np.allclose(b.sum(1) + c.sum(1), 1.0, atol=1e-12):
        raise NumericError("empty-level rows are not stochastic")
    if not np.allclose(e.sum(1) + a1.sum(1) + a0.sum(1), 1.0, atol=1e-12):
        raise NumericError("boundary busy rows are not stochastic")
    if not np.allclose(a2.sum(1) + a1.sum(1) + a0.sum(1), 1.0, atol=1e-12):
        raise NumericError("repeating rows are not stochastic")
    return QbdModel(b=b, c=c, e=e, a0=a0, a1=a1, a2=a2,
                    m=m, t_a=t_a, p=float(departure.absorb[-1]))


def utilization(m: int, p: float, t_a: int) -> float:
    """Offered load: mean service time over mean inter-arrival time."""
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"segment success probability must be in (0, 1], got {p}")
    return m / (p * t_a)


# ---------------------------------------------------------------------------
# rate-matrix solvers
# ---------------------------------------------------------------------------


def _assert_stable_blocks(a0, a1, a2):
    """Generic mean-drift stability check on the repeating blocks."""
    a = a0 + a1 + a2
    w, v = np.linalg.eig(a.T)
    idx = np.argmin(np.abs(w - 1.0))
    theta = np.real(v[:, idx])
    theta = np.abs(theta)
    theta /= theta.sum()
    up = float(theta @ a0.sum(axis=1))
    down = float(theta @ a2.sum(axis=1))
    if up >= down:
        raise UnstableModelError(
            f"mean drift is non-negative (up {up:.6g} >= down {down:.6g}); "
            "the queue is unstable"
        )


def _rate_from_g(a0, a1, g):
    n = a0.shape[0]
    return a0 @ np.linalg.inv(np.eye(n) - a1 - a0 @ g)


def _solve_cr(a0, a1, a2, max_iter=64):
    """Cyclic reduction for the one-step down-passage matrix G, then R."""
    n = a0.shape[0]
    eye = np.eye(n)
    up, local, down = a0.copy(), a1.copy(), a2.copy()
    local_hat = a1.copy()
    for _ in range(max_iter):
        try:
            f = np.linalg.solve(eye - local, np.hstack([up, down]))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"cyclic reduction pivot became singular: {exc}")
        f_up, f_down = f[:, :n], f[:, n:]
        up_fdown = up @ f_down
        local_hat = local_hat + up_fdown
        local = local + up_fdown + down @ f_up
        up = up @ f_up
        down = down @ f_down
        if min(np.abs(up).max(), np.abs(down).max()) < 1e-15:
            break
    g = np.linalg.solve(eye - local_hat, a2)
    return _rate_from_g(a0, a1, g)


def _solve_vi(a0, a1, a2, tol=1e-14, max_iter=2_000_000):
    """Fixed-point iteration from zero; the independent verification oracle."""
    r = np.zeros_like(a0)
    for _ in range(max_iter):
        r_next = a0 + r @ a1 + (r @ r) @ a2
        delta = np.abs(r_next - r).max()
        r = r_next
        if delta < tol:
            return r
    raise NumericError(f"value iteration did not reach {tol} in {max_iter} iterations")


def solve_rate_matrix(a0, a1, a2, method="cr"):
    """Minimal nonnegative solution of ``R = A0 + R A1 + R^2 A2``.

    Rejects unstable inputs up front; verifies the fixed-point residual to
    ``RATE_RESIDUAL_TOL`` and the spectral radius before returning.
    """
    _assert_stable_blocks(a0, a1, a2)
    if method == "cr":
        r = _solve_cr(a0, a1, a2)
    elif method == "vi":
        r = _solve_vi(a0, a1, a2)
    else:
        raise ConfigError(f"unknown rate-matrix method {method!r}")
    residual = np.abs(r - (a0 + r @ a1 + (r @ r) @ a2)).max()
    if not np.isfinite(residual) or residual > RATE_RESIDUAL_TOL:
        raise NumericError(f"rate-matrix residual {residual:.3e} exceeds {RATE_RESIDUAL_TOL}")
    if np.any(r < -1e-12):
        raise NumericError("rate matrix has negative entries")
    sr = max(np.abs(np.linalg.eigvals(r)))
    if sr >= 1.0:
        raise NumericError(f"rate-matrix spectral radius {sr:.6f} is not < 1")
    return np.maximum(r, 0.0)


# ---------------------------------------------------------------------------
# stationary distribution and delay metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StationarySolution:
    rate_matrix: np.ndarray
    pi0: np.ndarray
    pi1: np.ndarray
    spectral_radius: float

    def level_mass(self, q):
        if q == 0:
            return float(self.pi0.sum())
        return float((self.pi1 @ np.linalg.matrix_power(self.rate_matrix, q - 1)).sum())


def _inv_i_minus_b(b):
    """(I - B)^{-1} for the strictly upper bidiagonal arrival block: the
    cumulative chain of ones, exact in floating point."""
    t_a = b.shape[0]
    expected = np.eye(t_a, k=1)
    if not np.array_equal(b, expected):
        return np.linalg.inv(np.eye(t_a) - b)
    return np.triu(np.ones((t_a, t_a)))


def steady_state(qbd: QbdModel, rate_matrix=None) -> StationarySolution:
    """Boundary vectors of the stationary distribution.

    The level-1 vector spans the one-dimensional null space of the censored
    boundary transition matrix; levels beyond follow geometrically through
    the rate matrix and level 0 by the drop map.
    """
    if rate_matrix is None:
        rate_matrix = solve_rate_matrix(qbd.a0, qbd.a1, qbd.a2)
    n = qbd.phase_dim
    ib_inv = _inv_i_minus_b(qbd.b)
    census = qbd.e @ ib_inv @ qbd.c + qbd.a1 + rate_matrix @ qbd.a2
    u, s, vh = np.linalg.svd(census.T - np.eye(n))
    if s[-2] < 1e-8:
        raise NumericError("boundary null space is degenerate (dimension > 1)")
    pi1 = vh[-1]
    if pi1.sum() < 0:
        pi1 = -pi1
    if np.any(pi1 < -1e-10):
        raise NumericError("boundary null vector has significant negative entries")
    pi1 = np.where(np.abs(pi1) < NULLSPACE_CLAMP, 0.0, np.maximum(pi1, 0.0))
    pi0 = pi1 @ qbd.e @ ib_inv
    norm = pi0.sum() + pi1 @ np.linalg.solve(np.eye(n) - rate_matrix, np.ones(n))
    pi0 = pi0 / norm
    pi1 = pi1 / norm
    sr = float(max(np.abs(np.linalg.eigvals(rate_matrix))))
    return StationarySolution(rate_matrix=rate_matrix, pi0=pi0, pi1=pi1, spectral_radius=sr)


@dataclass(frozen=True)
class DelayResult:
    """Mean queue length, mean sojourn, and (optionally) the sojourn law."""

    mu_l: float
    mu_w_cycles: float
    mu_w_seconds: float
    pmf: np.ndarray | None = None          # pmf[i] = P{sojourn == i cycles}
    truncation_residual: float | None = None

    def cdf(self, w: int) -> float:
        """P{sojourn <= w cycles} (sojourn counted from joining the queue)."""
        if self.pmf is None:
            raise ConfigError("delay pmf was not computed")
        w = int(w)
        if w < 0:
            return 0.0
        return float(self.pmf[: w + 1].sum())

    def cdf_from_generation(self, w: int) -> float:
        """P{delay <= w} counting also the generation cycle itself, i.e. the
        cycle in which the packet is produced before its first transmission
        opportunity."""
        return self.cdf(int(w) - 1)

    def mean_from_pmf(self) -> float:
        if self.pmf is None:
            raise ConfigError("delay pmf was not computed")
        return float(self.pmf @ np.arange(self.pmf.shape[0]))


def delay_metrics(solution: StationarySolution, t_a: int, cycle_seconds: float | None = None,
                  qbd: QbdModel | None = None, with_pmf: bool = False) -> DelayResult:
    """Mean queue length and mean sojourn (Little's law over Tx cycles)."""
    n = solution.pi1.shape[0]
    eye = np.eye(n)
    ones = np.ones(n)
    inner = np.linalg.solve(eye - solution.rate_matrix, ones)
    mu_l = float(solution.pi1 @ np.linalg.solve(eye - solution.rate_matrix, inner))
    mu_w = t_a * mu_l
    seconds = mu_w * cycle_seconds if cycle_seconds is not None else math.nan
    pmf = residual = None
    if with_pmf:
        if qbd is None:
            raise ConfigError("delay pmf needs the QBD blocks")
        pmf, residual = delay_pmf(solution, qbd)
    return DelayResult(mu_l=mu_l, mu_w_cycles=mu_w, mu_w_seconds=seconds,
                       pmf=pmf, truncation_residual=residual)


def _wait_pmf(solution: StationarySolution, qbd: QbdModel, tol):
    """Distribution of the queueing wait: cycles until every packet ahead of
    an arriving one has departed (0 when the queue empties at arrival)."""
    m, t_a = qbd.m, qbd.t_a
    arrival = build_arrival_ph(t_a)
    departure = build_departure_ph(m, qbd.p)
    k_alpha = arrival.absorb[:, None] @ arrival.alpha[None, :]
    s_mat = departure.transient
    s_abs = departure.absorb[:, None]
    s_beta = s_abs @ departure.alpha[None, :]
    r = solution.rate_matrix

    collapse = np.kron(np.ones((t_a, 1)), np.eye(m))
    y0 = t_a * (solution.pi0 @ k_alpha + solution.pi1 @ np.kron(k_alpha, s_abs))
    mix = t_a * (np.kron(k_alpha, s_mat) + r @ np.kron(k_alpha, s_beta))

    # per-phase weight of seeing z packets ahead just after the arrival cycle
    v = []
    lead = solution.pi1.copy()
    while True:
        vz = (lead @ mix) @ collapse
        if vz.sum() < 1e-16 and len(v) > 1:
            break
        v.append(vz)
        lead = lead @ r
        if len(v) > 100_000:
            raise NumericError("level weights for the wait distribution do not decay")
    z_cap = len(v)

    ones_m = np.ones(m)
    pmf = [float(y0.sum())]
    cum = pmf[0]
    blocks = []  # blocks[z-1] = probability of the z-th departure at this horizon
    i = 0
    while cum < 1.0 - tol and i < PMF_MAX_DELAY:
        i += 1
        if i == 1:
            blocks = [s_beta.copy()]
        else:
            prev_last = blocks[-1]
            for z in range(len(blocks) - 1, 0, -1):
                blocks[z] = s_mat @ blocks[z] + s_beta @ blocks[z - 1]
            blocks[0] = s_mat @ blocks[0]
            if len(blocks) < z_cap:
                blocks.append(s_beta @ prev_last)
        mass = 0.0
        for z in range(min(i, z_cap)):
            mass += float(v[z] @ blocks[z] @ ones_m)
        pmf.append(mass)
        cum += mass
    return np.array(pmf), 1.0 - cum


def delay_pmf(solution: StationarySolution, qbd: QbdModel, tail_tol=PMF_TAIL_TOL):
    """Sojourn distribution: queueing wait convolved with the packet's own
    (negative binomial) service time.  Returns ``(pmf, residual)`` with
    ``pmf[i] = P{sojourn == i}``, truncated once the captured mass exceeds
    ``1 - tail_tol`` (or at the hard cap)."""
    departure = build_departure_ph(qbd.m, qbd.p)
    wait, wait_resid = _wait_pmf(solution, qbd, tail_tol / 10.0)

    # service pmf to matching precision
    srv = []
    v = departure.alpha.copy()
    cum = 0.0
    while cum < 1.0 - tail_tol / 10.0 and len(srv) < PMF_MAX_DELAY:
        srv.append(float(v @ departure.absorb))
        cum += srv[-1]
        v = v @ departure.transient
    srv = np.concatenate([[0.0], srv])  # service takes at least one cycle

    total = np.convolve(wait, srv)
    cdf = np.cumsum(total)
    cut = int(np.searchsorted(cdf, 1.0 - tail_tol)) + 1
    cut = min(max(cut, qbd.m + 1), total.shape[0], PMF_MAX_DELAY)
    pmf = total[:cut]
    return pmf, float(1.0 - pmf.sum())


# ---------------------------------------------------------------------------
# brute-force queue simulation (independent oracle)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _des_kernel(m, p, t_a, n_packets, seed):
    np.random.seed(seed)
    arrivals_cycle = np.empty(n_packets, dtype=np.int64)
    sojourn = np.empty(n_packets, dtype=np.int64)
    head = 0
    tail = 0
    segments_left = 0
    completed = 0
    cycle = 0
    while completed < n_packets:
        if tail < n_packets and cycle == tail * t_a:
            arrivals_cycle[tail] = cycle
            tail += 1
        if head < tail:
            if segments_left == 0:
                segments_left = m
            if np.random.random() < p:
                segments_left -= 1
                if segments_left == 0:
                    sojourn[completed] = cycle + 1 - arrivals_cycle[head]
                    completed += 1
                    head += 1
        cycle += 1
    return sojourn


def _des_numpy(m, p, t_a, n_packets, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    service = m + rng.negative_binomial(m, p, n_packets)
    drift = np.concatenate([[0], service[:-1] - t_a]).cumsum()
    wait = drift - np.minimum.accumulate(drift)
    return wait + service


def queue_des_oracle(m, p, t_a, n_packets, seed=0):
    """Cycle-by-cycle simulation of the device queue; returns per-packet
    sojourn times in cycles (from joining the queue to final departure).

    This is the brute-force check on the matrix-analytic solution; the
    accelerated path plays each cycle's attempt as a coin flip, the numpy
    fallback draws whole negative-binomial services and applies the waiting
    recursion, which is the same law.
    """
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"segment success probability must be in (0, 1], got {p}")
    if n_packets < 1:
        raise ConfigError("need at least one packet")
    if accel.USE_NUMBA:
        return _des_kernel(int(m), float(p), int(t_a), int(n_packets), int(seed))
    return _des_numpy(int(m), float(p), int(t_a), int(n_packets), int(seed))


def solve_delay(m, p, t_a, cycle_seconds=None, with_pmf=False):
    """Convenience pipeline: blocks, rate matrix, stationary law, delay."""
    if utilization(m, p, t_a) >= 1.0:
        raise UnstableModelError(
            f"utilization {utilization(m, p, t_a):.4f} >= 1 for m={m}, p={p:.4f}, t_a={t_a}"
        )
    qbd = build_qbd(build_arrival_ph(t_a), build_departure_ph(m, p))
    sol = steady_state(qbd)
    return delay_metrics(sol, t_a, cycle_seconds, qbd=qbd, with_pmf=with_pmf)

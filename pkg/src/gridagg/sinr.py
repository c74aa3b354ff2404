"""Analytical segment transmission success probabilities.

Success of a segment sent at the rate implied by ``m`` segments requires the
uplink SINR at the serving gateway to exceed a threshold; with unit-mean
exponential fading the success probability factors into a noise term and the
Laplace transform of the aggregate inter-cell interference.  Two interference
models are implemented:

* area process (``2d``): interferers form a homogeneous planar point process
  of matched density outside the intra-cell exclusion disc of radius
  ``sqrt(3) R / 2``.  Every exponent reduces to finite angular integrals of
  the specialized hypergeometric function in :mod:`gridagg.hyp`; the
  omni/omni case is closed form.
* line process (``1d``): interferers stay on the device lines, each line
  projected onto the boresight axis with a distance-dependent intensity
  compression.  The exponent is an infinite line sum of radial integrals,
  truncated once marginal terms fall below ``LINE_TERM_TOL``; radial
  integrals use adaptive Gauss-Kronrod (numba kernel) or a batched
  panel-doubling scheme (numpy fallback).

Directional antennas enter through the gain pattern on each link end.
Interferer orientations within the annulus ``[sqrt(3)R/2, sqrt(3)R]`` point
away from the gateway (uniform over the rear half-plane); beyond that they
are uniform over the full circle.  The intended link is perfectly aligned,
so its gain is ``(1+b)^2`` with directional ends on both sides, ``1+b``
with one, and 1 with none.

With distance-proportional transmit power control the received power target
replaces the distance-dependent signal term and interference picks up the
second moment of the serving distance; only the area process is used there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import accel
from .accel import njit
from .config import Approximation, Directivity, PowerMode, Scenario
from .errors import ConfigError, NumericError
from .geometry import SQRT3, NetworkModel, gain
from .hyp import hyp2f1_eta, radial_tail

LINE_TERM_TOL = 1e-8
RADIAL_TOL = 1e-9
MAX_LINES = 20000

_N_THETA1 = 96
_N_THETA2_FAR = 96
_N_THETA2_NEAR = 48


@dataclass(frozen=True)
class SinrThreshold:
    """Decoding threshold and rate for a packet split into ``segments`` parts."""

    xi: float        # linear SINR threshold
    rate_bps: float
    segments: int


def sinr_threshold(packet_bits, segments, zeta, bandwidth, slot) -> SinrThreshold:
    """Threshold required to decode one of ``segments`` equal segments
    transmitted within a single slot."""
    if segments < 1 or int(segments) != segments:
        raise ConfigError(f"segment count must be a positive integer, got {segments}")
    if packet_bits <= 0 or bandwidth <= 0 or slot <= 0 or not 0 < zeta <= 1:
        raise ConfigError("invalid rate parameters")
    rate = packet_bits / (segments * slot)
    xi = 2.0 ** (packet_bits / (segments * zeta * bandwidth * slot)) - 1.0
    return SinrThreshold(xi=xi, rate_bps=rate, segments=int(segments))


def intended_gain(directivity: Directivity, b: float) -> float:
    """Combined antenna gain of the perfectly aligned intended link."""
    if directivity is Directivity.DGW_DN:
        return (1.0 + b) ** 2
    if directivity is Directivity.DGW_ON:
        return 1.0 + b
    return 1.0


# ---------------------------------------------------------------------------
# line projection compression
# ---------------------------------------------------------------------------


def compression_factor(gamma, line_index, delta_y):
    """Intensity compression when projecting device line ``line_index`` onto
    the boresight axis, as a function of on-axis distance ``gamma``.

    Defined for ``gamma >= delta_y * (line_index + 1/2)`` (the line's closest
    approach); tends to 1 far away and exceeds 1 everywhere.
    """
    offset = delta_y * (line_index + 0.5)
    g = np.asarray(gamma, dtype=float)
    if np.any(g < offset * (1.0 - 1e-12)):
        raise NumericError(
            f"gamma below the closest approach {offset} of line {line_index}"
        )
    h = np.sqrt(np.maximum(g * g - offset * offset, 0.0))
    out = (np.sqrt(g * g + 2.0 * h + 1.0) + g) / (2.0 * h + 1.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# angular quadrature nodes
# ---------------------------------------------------------------------------


def _trap_nodes(n):
    """Periodic trapezoid nodes/weights on [0, 2*pi)."""
    theta = np.arange(n) * (2.0 * math.pi / n)
    w = np.full(n, 2.0 * math.pi / n)
    return theta, w


def _gl_nodes(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _fold_gains(g, w):
    """Merge duplicate gain values (cosine symmetry), summing their weights."""
    key = np.round(g, 13)
    uniq, inv = np.unique(key, return_inverse=True)
    w_out = np.zeros_like(uniq)
    np.add.at(w_out, inv, w)
    return uniq, w_out


# ---------------------------------------------------------------------------
# area-process exponents
# ---------------------------------------------------------------------------


def _exponent_area_const(directivity, s_p, model: NetworkModel):
    """Interference exponent for constant power; ``s_p`` is the LT argument
    times the transmit power (threshold * r_o^eta / intended gain)."""
    cfg = model.config
    eta = cfg.path_loss_eta
    lam = 1.0 / (cfg.delta_x * cfg.delta_y * model.n_g)
    a_half = SQRT3 * cfg.cell_radius / 2.0
    a_full = SQRT3 * cfg.cell_radius
    if directivity is Directivity.OGW_ON:
        return lam * 2.0 * math.pi * radial_tail(s_p, a_half, eta)
    th1, w1 = _trap_nodes(_N_THETA1)
    g1 = gain(th1, cfg.antenna)
    if directivity is Directivity.DGW_ON:
        return lam * float(w1 @ radial_tail(s_p * g1, a_half, eta))
    th2n, w2n = _gl_nodes(_N_THETA2_NEAR, math.pi / 2.0, 3.0 * math.pi / 2.0)
    th2f, w2f = _trap_nodes(_N_THETA2_FAR)
    g2n = gain(th2n, cfg.antenna)
    g2f = gain(th2f, cfg.antenna)
    c_n = s_p * g1[:, None] * g2n[None, :]
    c_f = s_p * g1[:, None] * g2f[None, :]
    near = radial_tail(c_n, a_half, eta) - radial_tail(c_n, a_full, eta)
    far = radial_tail(c_f, a_full, eta)
    return lam * float(w1 @ (near @ w2n) / math.pi + w1 @ (far @ w2f) / (2.0 * math.pi))


def _exponent_area_pc(directivity, xi, model: NetworkModel, e_r2):
    """Interference exponent under distance-proportional power control."""
    cfg = model.config
    eta = cfg.path_loss_eta
    g0 = intended_gain(directivity, cfg.antenna.b)
    denom = (eta - 2.0) * cfg.delta_x * cfg.delta_y * model.n_g
    if directivity is Directivity.OGW_ON:
        return 2.0 * math.pi * xi * e_r2 * hyp2f1_eta(xi, eta) / denom
    th1, w1 = _trap_nodes(_N_THETA1)
    g1 = gain(th1, cfg.antenna)
    if directivity is Directivity.DGW_ON:
        vals = g1 * hyp2f1_eta(xi * g1 / g0, eta)
        return xi * e_r2 / (g0 * denom) * float(w1 @ vals)
    th2n, w2n = _gl_nodes(_N_THETA2_NEAR, math.pi / 2.0, 3.0 * math.pi / 2.0)
    th2f, w2f = _trap_nodes(_N_THETA2_FAR)
    g2n = gain(th2n, cfg.antenna)
    g2f = gain(th2f, cfg.antenna)
    scale3 = 3.0 ** (2.0 - eta)
    gg_f = g1[:, None] * g2f[None, :]
    gg_n = g1[:, None] * g2n[None, :]
    far = 0.5 * scale3 * g2f[None, :] * hyp2f1_eta(xi * gg_f / (g0 * 3.0**eta), eta)
    near = g2n[None, :] * (
        hyp2f1_eta(xi * gg_n / g0, eta)
        - scale3 * hyp2f1_eta(xi * gg_n / (g0 * 3.0**eta), eta)
    )
    inner = far @ w2f + near @ w2n
    return float((w1 * g1) @ inner) * xi * e_r2 / (g0 * math.pi * denom)


# ---------------------------------------------------------------------------
# line-process exponent: numba kernel
# ---------------------------------------------------------------------------

# 15-point Kronrod nodes on [-1, 1]; the embedded 7-point Gauss rule sits at
# the odd indices.
_GK_X = np.array(
    [
        -0.991455371120813, -0.949107912342759, -0.864864423359769,
        -0.741531185599394, -0.586087235467691, -0.405845151377397,
        -0.207784955007898, 0.0, 0.207784955007898, 0.405845151377397,
        0.586087235467691, 0.741531185599394, 0.864864423359769,
        0.949107912342759, 0.991455371120813,
    ]
)
_GK_WK = np.array(
    [
        0.022935322010529, 0.063092092629979, 0.104790010322250,
        0.140653259715525, 0.169004726639267, 0.190350578064785,
        0.204432940075298, 0.209482141084728, 0.204432940075298,
        0.190350578064785, 0.169004726639267, 0.140653259715525,
        0.104790010322250, 0.063092092629979, 0.022935322010529,
    ]
)
_GK_WG = np.array(
    [
        0.129484966168870, 0.279705391489277, 0.381830050505119,
        0.417959183673469, 0.381830050505119, 0.279705391489277,
        0.129484966168870,
    ]
)


@njit(cache=True)
def _radial_panel(a, b, offset, c, eta, lo, span, infinite):
    """Gauss-Kronrod 15 on one tau-subinterval; returns (value, error).

    tau in [0, 1] parametrizes gamma = lo + span*tau^2 (finite) or
    gamma = lo / (1 - tau^2) (infinite tail); the tau^2 grading removes the
    square-root edge behaviour of the compression factor at the line's
    closest approach.
    """
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    sk = 0.0
    sg = 0.0
    for j in range(15):
        tau = mid + half * _GK_X[j]
        if infinite:
            om = 1.0 - tau * tau
            if om <= 0.0:
                continue
            gam = lo / om
            jac = 2.0 * lo * tau / (om * om)
        else:
            gam = lo + span * tau * tau
            jac = 2.0 * span * tau
        h = math.sqrt(max(gam * gam - offset * offset, 0.0))
        comp = (math.sqrt(gam * gam + 2.0 * h + 1.0) + gam) / (2.0 * h + 1.0)
        f = comp / (1.0 + gam**eta / c) * jac
        sk += _GK_WK[j] * f
        if j % 2 == 1:
            sg += _GK_WG[(j - 1) // 2] * f
    return half * sk, half * abs(sk - sg)


@njit(cache=True)
def _radial_adaptive(offset, c, eta, lo, hi, tol, stack_a, stack_b):
    """Adaptive integral of the compressed line integrand over [lo, hi]
    (hi <= 0 means an infinite tail)."""
    infinite = hi <= 0.0
    span = 0.0 if infinite else hi - lo
    stack_a[0] = 0.0
    stack_b[0] = 1.0
    n = 1
    total = 0.0
    panels = 0
    while n > 0:
        n -= 1
        a = stack_a[n]
        b = stack_b[n]
        val, err = _radial_panel(a, b, offset, c, eta, lo, span, infinite)
        panels += 1
        if err <= tol * (b - a) or (b - a) < 1e-10 or panels > 4000 or n >= stack_a.shape[0] - 2:
            total += val
        else:
            m = 0.5 * (a + b)
            stack_a[n] = a
            stack_b[n] = m
            n += 1
            stack_a[n] = m
            stack_b[n] = b
            n += 1
    return total


@njit(cache=True)
def _exponent_lines_kernel(
    s_p, eta, delta_y, a_half, a_full, inv_dx_ng,
    g1, w1, g2n, w2n, g2f, w2f, mode, min_lines, term_tol, radial_tol,
):
    """Line sum of the interference exponent.

    mode 0: directional on both link ends (orientation-split annulus),
    mode 1: directional gateway only, mode 2: omni everywhere.
    Returns (exponent, lines_used, converged).
    """
    stack_a = np.empty(128)
    stack_b = np.empty(128)
    total = 0.0
    i = 0
    converged = 0
    while i < MAX_LINES:
        offset = (i + 0.5) * delta_y
        term = 0.0
        if mode == 0:
            lo_near = max(offset, a_half)
            has_near = offset < a_full
            lo_far = max(offset, a_full)
            for k1 in range(g1.shape[0]):
                c1 = s_p * g1[k1]
                acc_n = 0.0
                acc_f = 0.0
                if has_near:
                    for k2 in range(g2n.shape[0]):
                        c = c1 * g2n[k2]
                        if c > 0.0:
                            acc_n += w2n[k2] * _radial_adaptive(
                                offset, c, eta, lo_near, a_full, radial_tol, stack_a, stack_b
                            )
                for k2 in range(g2f.shape[0]):
                    c = c1 * g2f[k2]
                    if c > 0.0:
                        acc_f += w2f[k2] * _radial_adaptive(
                            offset, c, eta, lo_far, -1.0, radial_tol, stack_a, stack_b
                        )
                term += w1[k1] * (2.0 * acc_n + acc_f)
            term *= inv_dx_ng / (math.pi * math.pi)
        elif mode == 1:
            lo = max(offset, a_half)
            acc = 0.0
            for k1 in range(g1.shape[0]):
                c = s_p * g1[k1]
                if c > 0.0:
                    acc += w1[k1] * _radial_adaptive(
                        offset, c, eta, lo, -1.0, radial_tol, stack_a, stack_b
                    )
            term = 2.0 * inv_dx_ng / math.pi * acc
        else:
            lo = max(offset, a_half)
            term = 4.0 * inv_dx_ng * _radial_adaptive(
                offset, s_p, eta, lo, -1.0, radial_tol, stack_a, stack_b
            )
        total += term
        i += 1
        if i >= min_lines and term < term_tol:
            converged = 1
            break
    return total, i, converged


# ---------------------------------------------------------------------------
# line-process exponent: batched numpy fallback
# ---------------------------------------------------------------------------


def _radial_batch_np(offset, c, eta, lo, hi, tol):
    """Vectorized line integrand integral for an array of scale factors ``c``.

    Uses the same tau^2 grading as the kernel on uniformly refined
    Kronrod panels, doubling the panel count until the batch converges.
    """
    infinite = hi is None
    span = 0.0 if infinite else hi - lo
    c = np.asarray(c, dtype=float)
    out_prev = None
    for n_panels in (8, 16, 32, 64, 128, 256):
        edges = np.linspace(0.0, 1.0, n_panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
        half = 0.5 * (edges[1] - edges[0])
        tau = (mid + half * _GK_X[None, :]).ravel()
        w = np.tile(half * _GK_WK, n_panels)
        if infinite:
            om = 1.0 - tau * tau
            gam = lo / om
            jac = 2.0 * lo * tau / (om * om)
        else:
            gam = lo + span * tau * tau
            jac = 2.0 * span * tau
        h = np.sqrt(np.maximum(gam * gam - offset * offset, 0.0))
        comp = (np.sqrt(gam * gam + 2.0 * h + 1.0) + gam) / (2.0 * h + 1.0)
        base = w * comp * jac
        ge = gam**eta
        out = np.empty_like(c)
        block = 2048
        for b0 in range(0, c.shape[0], block):
            cc = c[b0 : b0 + block, None]
            out[b0 : b0 + block] = (base[None, :] / (1.0 + ge[None, :] / cc)).sum(axis=1)
        if out_prev is not None and np.max(np.abs(out - out_prev)) <= tol:
            return out
        out_prev = out
    return out_prev


def _exponent_lines_numpy(s_p, eta, delta_y, a_half, a_full, inv_dx_ng,
                          g1, w1, g2n, w2n, g2f, w2f, mode, min_lines, term_tol):
    total = 0.0
    i = 0
    converged = 0
    if mode == 0:
        c_near = (s_p * np.outer(g1, g2n)).ravel()
        w_near = (2.0 * np.outer(w1, w2n)).ravel()
        c_far = (s_p * np.outer(g1, g2f)).ravel()
        w_far = np.outer(w1, w2f).ravel()
    elif mode == 1:
        c_far = s_p * g1
        w_far = w1
    while i < MAX_LINES:
        offset = (i + 0.5) * delta_y
        if mode == 0:
            term = 0.0
            if offset < a_full:
                lo_near = max(offset, a_half)
                term += float(
                    w_near @ _radial_batch_np(offset, c_near, eta, lo_near, a_full, RADIAL_TOL)
                )
            lo_far = max(offset, a_full)
            term += float(w_far @ _radial_batch_np(offset, c_far, eta, lo_far, None, RADIAL_TOL))
            term *= inv_dx_ng / math.pi**2
        elif mode == 1:
            lo = max(offset, a_half)
            term = 2.0 * inv_dx_ng / math.pi * float(
                w_far @ _radial_batch_np(offset, c_far, eta, lo, None, RADIAL_TOL)
            )
        else:
            lo = max(offset, a_half)
            term = 4.0 * inv_dx_ng * float(
                _radial_batch_np(offset, np.array([s_p]), eta, lo, None, RADIAL_TOL)[0]
            )
        total += term
        i += 1
        if i >= min_lines and term < term_tol:
            converged = 1
            break
    return total, i, converged


# ---------------------------------------------------------------------------
# public success probabilities
# ---------------------------------------------------------------------------

_MODE_OF = {Directivity.DGW_DN: 0, Directivity.DGW_ON: 1, Directivity.OGW_ON: 2}


def success_prob_1d(directivity: Directivity, xi, r_o, model: NetworkModel, n_lines=None):
    """Segment success probability under the parallel line-process model
    (constant transmission power only).

    By default the line sum runs until its marginal term drops below
    ``LINE_TERM_TOL`` (never before covering three cell radii).  Passing
    ``n_lines`` truncates at that many lines per half-plane instead, which
    reproduces evaluations over a deployment window of ``2 * n_lines``
    device lines.
    """
    cfg = model.config
    if xi < 0:
        raise ConfigError("threshold must be non-negative")
    if xi == 0.0:
        return 1.0
    if r_o <= 0 or r_o > cfg.cell_radius:
        raise ConfigError(f"link distance {r_o} outside (0, {cfg.cell_radius}]")
    eta = cfg.path_loss_eta
    g0 = intended_gain(directivity, cfg.antenna.b)
    p_tx = model.p_constant
    s_p = xi * r_o**eta / g0
    noise = xi * cfg.noise_power * r_o**eta / (g0 * p_tx)

    g1, w1 = _fold_gains(gain(_trap_nodes(32)[0], cfg.antenna), _trap_nodes(32)[1])
    th2n, w2n = _gl_nodes(16, math.pi / 2.0, 3.0 * math.pi / 2.0)
    g2n, w2n = _fold_gains(gain(th2n, cfg.antenna), w2n)
    g2f, w2f = _fold_gains(gain(_trap_nodes(32)[0], cfg.antenna), _trap_nodes(32)[1])

    a_half = SQRT3 * cfg.cell_radius / 2.0
    a_full = SQRT3 * cfg.cell_radius
    if n_lines is None:
        min_lines = int(math.ceil(3.0 * cfg.cell_radius / cfg.delta_y)) + 1
        term_tol = LINE_TERM_TOL
    else:
        min_lines = int(n_lines)
        term_tol = math.inf  # stop exactly at the requested line count
    mode = _MODE_OF[directivity]
    args = (
        s_p, eta, cfg.delta_y, a_half, a_full,
        1.0 / (cfg.delta_x * model.n_g),
        g1, w1, g2n, w2n, g2f, w2f, mode, min_lines, term_tol,
    )
    if accel.USE_NUMBA:
        exponent, lines, ok = _exponent_lines_kernel(*args, RADIAL_TOL)
    else:
        exponent, lines, ok = _exponent_lines_numpy(*args)
    if n_lines is None and not ok:
        raise NumericError(
            f"line sum did not converge below {LINE_TERM_TOL} within {lines} lines "
            f"(xi={xi:g}, r_o={r_o:g})"
        )
    return math.exp(-noise - exponent)


def success_prob_2d(directivity: Directivity, xi, r_o, model: NetworkModel):
    """Segment success probability under the planar-process model with
    constant transmission power."""
    cfg = model.config
    if xi < 0:
        raise ConfigError("threshold must be non-negative")
    if xi == 0.0:
        return 1.0
    if r_o <= 0 or r_o > cfg.cell_radius:
        raise ConfigError(f"link distance {r_o} outside (0, {cfg.cell_radius}]")
    g0 = intended_gain(directivity, cfg.antenna.b)
    s_p = xi * r_o**cfg.path_loss_eta / g0
    noise = xi * cfg.noise_power * r_o**cfg.path_loss_eta / (g0 * model.p_constant)
    return math.exp(-noise - _exponent_area_const(directivity, s_p, model))


def success_prob_2d_pc(directivity: Directivity, xi, model: NetworkModel, e_r2=None):
    """Segment success probability with distance-proportional power control
    (planar-process model); independent of the device position."""
    cfg = model.config
    if xi < 0:
        raise ConfigError("threshold must be non-negative")
    if xi == 0.0:
        return 1.0
    if e_r2 is None:
        e_r2 = model.e_r2
    g0 = intended_gain(directivity, cfg.antenna.b)
    noise = xi * cfg.noise_power / (g0 * cfg.rho_watts)
    return math.exp(-noise - _exponent_area_pc(directivity, xi, model, e_r2))


def success_probability(scenario: Scenario, xi, model: NetworkModel, r_o=None):
    """Dispatch on scenario (directivity, power mode, approximation)."""
    if scenario.approximation is Approximation.MONTE_CARLO:
        raise ConfigError("use gridagg.montecarlo for simulated success probabilities")
    if scenario.power is PowerMode.INVERSION:
        return success_prob_2d_pc(scenario.directivity, xi, model)
    if r_o is None:
        raise ConfigError("constant-power success probability needs a link distance r_o")
    if scenario.approximation is Approximation.ONE_D:
        return success_prob_1d(scenario.directivity, xi, r_o, model)
    return success_prob_2d(scenario.directivity, xi, r_o, model)


@dataclass(frozen=True)
class SuccessCurve:
    """Success probability swept over a threshold grid (dB)."""

    xi_db: np.ndarray
    p: np.ndarray
    scenario: Scenario
    r_o: float | None = None


def success_curve(scenario: Scenario, xi_db, model: NetworkModel, r_o=None) -> SuccessCurve:
    xi_db = np.asarray(xi_db, dtype=float)
    p = np.array(
        [success_probability(scenario, 10.0 ** (x / 10.0), model, r_o) for x in xi_db]
    )
    return SuccessCurve(xi_db=xi_db, p=p, scenario=scenario, r_o=r_o)

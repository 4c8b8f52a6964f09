"""Closed-form SNR expressions and diversity-order estimators.

The TDMA-uplink scheme admits an exact receive-SNR formula: with
x = sum_i |f_i|^2 (uplink gain of the target) and y the quadratic form of
the target's stacked downlink channel through the zero-forcing projector,
the post-IC whitened SNR is the scaled harmonic mean x y / (x + c^2 y).
Verifying this equality against the simulated system exercises the whole
IC and covariance pipeline at once, which is why it is a primary oracle.

Diversity orders are estimated two ways: from the small-epsilon slope of
the SNR outage probability, and from the high-SNR slope of measured BER
curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .airlink import ChannelRealization, NetworkConfig, RngStream
from .numerics import (
    NumericError,
    UsageError,
    dagger,
    hermitian_solve,
    null_space_projector,
)
from .relay_codec import dstc_power_scale, tdma_power_scale
from .numerics import solve_psd_stack
from .rx_ic import (
    dstc_channel_stacks,
    gtilde,
    ic_iterative,
    ic_stack_batch,
    noise_cov_dstc_icrec,
    noise_cov_tdma_icrec,
    tdma_channel_stacks,
)

__all__ = [
    "SnrSample",
    "DiversityEstimate",
    "snr_direct",
    "snr_tdma_closed_form",
    "tdma_post_ic_parts",
    "snr_tdma_direct",
    "snr_dstc_direct",
    "snr_upper_bound_dstc",
    "snr_tdma_batch",
    "snr_dstc_batch",
    "outage_diversity",
    "make_eps_grid",
    "ber_slope",
    "lemma1_composite",
]


@dataclass(frozen=True)
class SnrSample:
    """One instantaneous normalized receive SNR draw."""

    gamma: float
    channel: ChannelRealization = None
    target_symbol: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise NumericError(f"invalid SNR sample {self.gamma}")


@dataclass(frozen=True)
class DiversityEstimate:
    """Fitted log-log slope with its regression standard error."""

    slope: float
    stderr: float
    fit_range: tuple
    points: tuple

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.slope) and np.isfinite(self.stderr))


def snr_direct(h, r_n) -> float:
    """Whitened receive SNR h* R^{-1} h of an effective channel column."""
    h = np.asarray(h, dtype=complex).reshape(-1)
    w = hermitian_solve(np.asarray(r_n, dtype=complex), h)
    val = float(np.real(np.vdot(h, w)))
    return max(val, 0.0)


def _split_stacks(stacks: np.ndarray, t_total: int, N: int):
    """Per-split (J, 2N, 2) channel stacks of a possibly split system."""
    if t_total in (1, 2):
        return [stacks]
    return [stacks[..., : 2 * N, 0:2], stacks[..., 2 * N :, 2:4]]


def tdma_post_ic_parts(ch: ChannelRealization, cfg: NetworkConfig, target: int = 0):
    """Simulated-system pieces of the TDMA-uplink pipeline for one target.

    Returns a list with one (h, R) pair per split, where h is the first
    column of the post-IC effective channel (no power scale) and R the
    exact post-IC noise covariance.
    """
    stacks = tdma_channel_stacks(ch.G, cfg.J)
    t_total = stacks.shape[-1]
    kappa = 2.0 if t_total == 4 else 1.0
    parts = []
    for split in _split_stacks(stacks, t_total, cfg.N):
        ic = ic_iterative([split[j] for j in range(cfg.J)], cfg.N, target)
        bh = ic.B @ split[target]
        r = noise_cov_tdma_icrec(ic.B, split[target], ch.F[:, target], cfg.P, cfg.M, var=kappa)
        parts.append((bh[:, 0], r))
    return parts


def snr_tdma_direct(ch: ChannelRealization, cfg: NetworkConfig, target: int = 0) -> float:
    """Receive SNR of the target's first symbol on the simulated system."""
    return sum(snr_direct(h, r) for h, r in tdma_post_ic_parts(ch, cfg, target))


def snr_tdma_closed_form(ch: ChannelRealization, cfg: NetworkConfig, target: int = 0) -> float:
    """Closed-form receive SNR of the TDMA-uplink scheme.

    gamma = x y / (x + c^2 y) summed over splits (halved for the 4-slot
    split pair, whose per-split variances double), with
    x = sum_i |f_i|^2 and y = g* B* (B B*)^{-1} B g for the stacked first
    column g of the target's downlink blocks.  Equals snr_tdma_direct to
    numerical precision; the equality encodes the zero-forcing projector
    identity and the Alamouti diagonality of the whitened Gram matrix.
    """
    if cfg.M not in (2 * cfg.J, 4 * cfg.J):
        raise UsageError(f"closed form covers M in (2J, 4J), got M={cfg.M}, J={cfg.J}")
    x = float(np.sum(np.abs(ch.F[:, target]) ** 2))
    if x == 0.0:
        return 0.0
    c = tdma_power_scale(cfg.P, cfg.M)
    stacks = tdma_channel_stacks(ch.G, cfg.J)
    t_total = stacks.shape[-1]
    kappa = 2.0 if t_total == 4 else 1.0
    gamma = 0.0
    for split in _split_stacks(stacks, t_total, cfg.N):
        ic = ic_iterative([split[j] for j in range(cfg.J)], cfg.N, target)
        bg = ic.B @ split[target][:, :1]
        w = hermitian_solve(ic.B @ dagger(ic.B), bg[:, 0])
        y = float(np.real(np.vdot(bg[:, 0], w)))
        if y > 0.0:
            gamma += (x * y / (x + c * c * y)) / kappa
    return gamma


def snr_dstc_direct(ch: ChannelRealization, cfg: NetworkConfig, target: int = 0) -> float:
    """Receive SNR of the target's first symbol for the concurrent-uplink
    scheme on the post-IC system (2-antenna relay)."""
    if cfg.M != 2:
        raise UsageError(f"direct SNR helper covers M=2, got M={cfg.M}")
    stacks = dstc_channel_stacks(ch.F, ch.G)
    ic = ic_iterative([stacks[j] for j in range(cfg.J)], cfg.N, target)
    h = (ic.B @ stacks[target])[:, 0]
    r = noise_cov_dstc_icrec(ic.B, gtilde(ch.G), cfg.P, cfg.J, cfg.M)
    return snr_direct(h, r)


def snr_upper_bound_dstc(ch: ChannelRealization, cfg: NetworkConfig, target: int = 0) -> float:
    """Channel-only upper bound on the concurrent-uplink receive SNR:

    bound = trace(Gt* Gt) * f_t* Theta f_t

    with Gt the relay-noise mixing matrix (trace = 2 * sum |g_in|^2) and
    Theta the projector onto the orthogonal complement of the other
    sources' uplink columns.  Dominates the actual post-IC SNR on every
    draw; its diversity order caps the scheme's at M - J + 1.
    """
    if cfg.M != 2:
        raise UsageError(f"upper bound covers M=2, got M={cfg.M}")
    f_t = ch.F[:, target]
    others = np.delete(ch.F, target, axis=1)
    theta = null_space_projector(others).matrix
    quad = float(np.real(np.vdot(f_t, theta @ f_t)))
    g_total = 2.0 * float(np.sum(np.abs(ch.G) ** 2))
    return g_total * max(quad, 0.0)


def snr_tdma_batch(F: np.ndarray, G: np.ndarray, cfg: NetworkConfig, target: int = 0) -> np.ndarray:
    """Vectorized closed-form TDMA-uplink SNR over (n, M, J) / (n, M, N)
    channel draws; degenerate draws come back as 0."""
    x = np.sum(np.abs(F[..., target]) ** 2, axis=-1)
    c = tdma_power_scale(cfg.P, cfg.M)
    stacks = tdma_channel_stacks(G, cfg.J)  # (n, J, rows, t)
    t_total = stacks.shape[-1]
    kappa = 2.0 if t_total == 4 else 1.0
    gamma = np.zeros(x.shape)
    for split in _split_stacks(stacks, t_total, cfg.N):
        bmat, bad = ic_stack_batch(split, target)
        bg = (bmat @ split[:, target])[..., 0]
        w = solve_psd_stack(bmat @ dagger(bmat), bg)
        y = np.maximum(np.einsum("...k,...k->...", np.conj(bg), w).real, 0.0)
        term = np.where(x > 0, x * y / np.maximum(x + c * c * y, 1e-300), 0.0)
        gamma += np.where(bad, 0.0, term) / kappa
    return gamma


def snr_dstc_batch(F: np.ndarray, G: np.ndarray, cfg: NetworkConfig, target: int = 0) -> np.ndarray:
    """Vectorized post-IC concurrent-uplink SNR (2-antenna relay)."""
    if cfg.M != 2:
        raise UsageError(f"direct SNR helper covers M=2, got M={cfg.M}")
    stacks = dstc_channel_stacks(F, G)
    bmat, bad = ic_stack_batch(stacks, target)
    h = (bmat @ stacks[:, target])[..., 0]
    gt = gtilde(G)
    c = dstc_power_scale(cfg.P, cfg.M, cfg.J)
    bg = bmat @ gt
    r = c * c * bg @ dagger(bg) + bmat @ dagger(bmat)
    w = solve_psd_stack(r, h)
    gamma = np.maximum(np.einsum("...k,...k->...", np.conj(h), w).real, 0.0)
    return np.where(bad, 0.0, gamma)


# ---------------------------------------------------------------------------
# Diversity estimators


def make_eps_grid(start: float, count: int = 12, factor: float = 2.0):
    """Decreasing geometric epsilon grid start, start/factor, ..."""
    if start <= 0 or count < 1 or factor <= 1:
        raise UsageError("need start > 0, count >= 1, factor > 1")
    return start / factor ** np.arange(count)


def outage_diversity(
    sampler,
    eps_grid,
    trials: int,
    stream: RngStream = None,
    min_events: int = 50,
    batch: int = 200_000,
) -> DiversityEstimate:
    """Small-epsilon slope of log P(gamma < eps) vs log eps.

    ``sampler(stream, n)`` returns n gamma draws.  Points with fewer than
    ``min_events`` outage events are dropped; the weighted least-squares
    fit uses per-point event counts as weights.  Fewer than 3 usable
    points yields a flagged (NaN) estimate.
    """
    eps = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    if eps.size < 1 or eps[-1] <= 0:
        raise UsageError("epsilon grid must be positive")
    stream = stream if stream is not None else RngStream(0)
    counts = np.zeros(eps.size, dtype=np.int64)
    done = 0
    while done < trials:
        n = min(batch, trials - done)
        g = np.asarray(sampler(stream, n), dtype=float)
        counts += np.sum(g[:, None] < eps[None, :], axis=0)
        done += n
    keep = counts >= min_events
    pts = tuple(
        (float(e), int(k), float(k) / trials) for e, k in zip(eps[keep], counts[keep])
    )
    if keep.sum() < 3:
        return DiversityEstimate(float("nan"), float("nan"), (float(eps[-1]), float(eps[0])), pts)
    x = np.log(eps[keep])
    y = np.log(counts[keep] / trials)
    w = counts[keep].astype(float)
    slope, stderr = _wls_slope(x, y, w)
    return DiversityEstimate(slope, stderr, (float(eps[keep].min()), float(eps[keep].max())), pts)


def _wls_slope(x, y, w):
    wsum = w.sum()
    xm = np.sum(w * x) / wsum
    ym = np.sum(w * y) / wsum
    sxx = np.sum(w * (x - xm) ** 2)
    if sxx <= 0:
        return float("nan"), float("nan")
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    resid = y - ym - slope * (x - xm)
    dof = max(len(x) - 2, 1)
    s2 = np.sum(w * resid**2) / dof
    return float(slope), float(math.sqrt(s2 / sxx))


def ber_slope(points, window: int = 4) -> DiversityEstimate:
    """High-SNR diversity from measured BER points.

    ``points`` are (snr_db, ber) or (snr_db, ber, bit_errors) tuples; the
    fit covers the top ``window`` SNR points and returns the slope of
    -log10(BER) against snr_db/10 (decades per decade of SNR).
    """
    pts = sorted((tuple(p) for p in points), key=lambda p: p[0])
    if len(pts) < 3:
        raise UsageError("need at least 3 BER points")
    for p in pts:
        if not p[1] > 0:
            raise UsageError(f"BER must be positive, got {p[1]} at {p[0]} dB")
        if len(p) > 2 and p[2] < 100:
            raise UsageError(f"point at {p[0]} dB has only {p[2]} bit errors")
    top = pts[-window:] if window and window >= 3 else pts
    x = np.array([p[0] / 10.0 for p in top])
    y = np.array([-math.log10(p[1]) for p in top])
    w = np.ones_like(x)
    slope, stderr = _wls_slope(x, y, w)
    return DiversityEstimate(slope, stderr, (float(top[0][0]), float(top[-1][0])), tuple(top))


def lemma1_composite(g_samplers, gamma_g_sampler):
    """Sampler for the two-hop composite SNR

    gamma = sum_n gamma_n * gamma_g / (gamma_n + gamma_g)

    with one shared gamma_g draw per sample and the 0/0 case defined as 0.
    The composite's diversity is min over the inputs' diversities.
    """
    if len(g_samplers) < 1:
        raise UsageError("need at least one per-branch sampler")

    def sampler(stream: RngStream, n: int) -> np.ndarray:
        gg = np.asarray(gamma_g_sampler(stream, n), dtype=float)
        total = np.zeros(n)
        for gs in g_samplers:
            gn = np.asarray(gs(stream, n), dtype=float)
            denom = gn + gg
            with np.errstate(invalid="ignore", divide="ignore"):
                term = np.where(denom > 0, gn * gg / np.where(denom > 0, denom, 1.0), 0.0)
            total += term
        return total

    return sampler

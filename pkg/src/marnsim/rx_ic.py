"""Destination-side processing.

The destination never works on raw time samples directly.  It first forms
an *equivalent system*: a fixed linear recombination of the received
samples (and their conjugates) under which each source's contribution
appears through stacked 2x2 blocks with (anti-)Alamouti structure.  For a
2-antenna relay a single such system exists; for 3 or 4 relay antennas
the quasi-orthogonal codeword splits into a +/- pair of Alamouti systems
that share symbols and are decoded together.

Interference from the other sources is then removed by a zero-forcing IC
matrix built from cross-scaled conjugate blocks; the block identity
H* H = (||H||_F^2 / t) I for family members makes each row exactly null
the unwanted source.  Decoding whitens with the exact post-IC noise
covariance and searches symbol components independently (symbol-wise for
Alamouti, pair-wise for the quasi-orthogonal split).

Every observation entry is an explicit linear combination of raw samples;
the recombination matrices are recorded so tests can audit the
construction end to end.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .airlink import ChannelRealization, Constellation, NetworkConfig
from .numerics import NumericError, UsageError, dagger, solve_psd_stack
from .relay_codec import dstc_design, dstc_power_scale, tdma_power_scale

__all__ = [
    "EquivalentSystem",
    "IcMatrix",
    "SymbolSpec",
    "symbol_spec",
    "default_rotation",
    "recombination_matrices",
    "equiv_system_dstc_icrec",
    "equiv_system_tdma_icrec",
    "ic_matrix_pairwise",
    "ic_iterative",
    "noise_cov_dstc_icrec",
    "noise_cov_tdma_icrec",
    "propagate_noise_cov",
    "ml_decode",
    "joint_ml_decode",
]

# Block norms below this are treated as a degenerate fade: resample the trial.
DEGENERATE_TOL = 1e-12


def default_rotation(order: int) -> float:
    """Rotation angle for the second symbol pair of quasi-orthogonal
    codewords; pi/order keeps the rotated constellation maximally apart
    from the unrotated one."""
    return math.pi / order


@dataclass(frozen=True)
class SymbolSpec:
    """How the entries of the equivalent symbol vector relate to the
    underlying transmitted symbols.

    ``entries[k]`` is a tuple of (symbol index, conjugated, sign) terms
    whose signed sum forms entry k.  ``rotated[i]`` marks symbols drawn
    from the rotated constellation.
    """

    n_symbols: int
    entries: tuple
    rotated: tuple

    def build(self, symbols: np.ndarray) -> np.ndarray:
        """Symbol vector entries from a (..., n_symbols) symbol array."""
        out = []
        for terms in self.entries:
            acc = 0.0 + 0.0j
            for idx, conj, sign in terms:
                v = np.conj(symbols[..., idx]) if conj else symbols[..., idx]
                acc = acc + sign * v
            out.append(acc)
        return np.stack(np.broadcast_arrays(*out), axis=-1)

    def shifted(self, offset: int) -> "SymbolSpec":
        entries = tuple(
            tuple((idx + offset, conj, sign) for idx, conj, sign in terms)
            for terms in self.entries
        )
        return SymbolSpec(self.n_symbols, entries, self.rotated)


def symbol_spec(T: int) -> SymbolSpec:
    """Symbol vector layout for a T-slot codeword block.

    T=2 gives the Alamouti layout (s1, conj(s2)); T=4 gives the stacked
    +/- split layout (s1+s4, conj(s3)-conj(s2), s1-s4, -conj(s3)-conj(s2))
    with the second symbol pair rotated.
    """
    if T == 1:
        return SymbolSpec(1, (((0, False, 1),),), (False,))
    if T == 2:
        return SymbolSpec(2, (((0, False, 1),), ((1, True, 1),)), (False, False))
    if T == 4:
        entries = (
            ((0, False, 1), (3, False, 1)),
            ((2, True, 1), (1, True, -1)),
            ((0, False, 1), (3, False, -1)),
            ((2, True, -1), (1, True, -1)),
        )
        return SymbolSpec(4, entries, (False, False, True, True))
    raise UsageError(f"unsupported block length T={T}")


@dataclass(frozen=True)
class EquivalentSystem:
    """Post-recombination (optionally post-IC) linear system

    obs = scale * H_eff @ s_vec + n,   E[n n*] = R_n,

    where s_vec follows ``symbols`` and ``target`` names the source whose
    symbols H_eff carries.  ``audit`` holds (C1, C2) with
    obs = C1 @ raw.ravel() + C2 @ conj(raw.ravel()).
    """

    obs: np.ndarray
    H_eff: np.ndarray
    R_n: np.ndarray
    scale: float
    target: int
    symbols: SymbolSpec = field(default=None)
    audit: tuple = None

    def validate(self, tol: float = 1e-10) -> None:
        k = self.obs.shape[-1]
        if self.H_eff.shape[-2] != k or self.R_n.shape[-2:] != (k, k):
            raise UsageError("obs / H_eff / R_n dimensions disagree")
        r = self.R_n
        scale = max(float(np.abs(r).max()), 1e-300)
        if np.abs(r - dagger(r)).max() > tol * scale:
            raise NumericError("noise covariance is not Hermitian")
        w = np.linalg.eigvalsh(0.5 * (r + dagger(r)))
        if w.min() < -tol * max(w.max(), 1e-300):
            raise NumericError("noise covariance is not PSD")


@dataclass(frozen=True)
class IcMatrix:
    """Zero-forcing cancellation matrix: B annihilates the stacked
    equivalent channel of every source in ``cancelled``."""

    B: np.ndarray
    cancelled: frozenset
    stage_count: int


# ---------------------------------------------------------------------------
# Sample recombination


def recombination_matrices(N: int, T: int):
    """(C1, C2) with obs = C1 raw + C2 conj(raw), raw flattened (N*T,).

    T=2 interleaves (x_n[1], conj(x_n[2])) per antenna (2N rows); T=4
    stacks the + split (x_n[1]+x_n[4], conj(x_n[2])-conj(x_n[3])) over all
    antennas followed by the - split (2N + 2N rows).
    """
    if T == 1:
        return np.eye(N, dtype=complex), np.zeros((N, N), dtype=complex)
    if T == 2:
        c1 = np.zeros((2 * N, 2 * N), dtype=complex)
        c2 = np.zeros((2 * N, 2 * N), dtype=complex)
        for n in range(N):
            c1[2 * n, 2 * n] = 1.0
            c2[2 * n + 1, 2 * n + 1] = 1.0
        return c1, c2
    if T == 4:
        c1 = np.zeros((4 * N, 4 * N), dtype=complex)
        c2 = np.zeros((4 * N, 4 * N), dtype=complex)
        for n in range(N):
            base = 4 * n
            # + split
            c1[2 * n, base + 0] = 1.0
            c1[2 * n, base + 3] = 1.0
            c2[2 * n + 1, base + 1] = 1.0
            c2[2 * n + 1, base + 2] = -1.0
            # - split
            c1[2 * N + 2 * n, base + 0] = 1.0
            c1[2 * N + 2 * n, base + 3] = -1.0
            c2[2 * N + 2 * n + 1, base + 1] = 1.0
            c2[2 * N + 2 * n + 1, base + 2] = 1.0
        return c1, c2
    raise UsageError(f"unsupported block length T={T}")


def recombine(raw: np.ndarray, T: int) -> np.ndarray:
    """Apply the sample recombination to (..., N, T) raw samples."""
    raw = np.asarray(raw, dtype=complex)
    if raw.shape[-1] != T:
        raise UsageError(f"raw block length {raw.shape[-1]} != T={T}")
    if T == 1:
        return raw[..., 0]
    if T == 2:
        return np.stack([raw[..., 0], np.conj(raw[..., 1])], axis=-1).reshape(
            *raw.shape[:-2], -1
        )
    if T == 4:
        plus = np.stack(
            [raw[..., 0] + raw[..., 3], np.conj(raw[..., 1]) - np.conj(raw[..., 2])],
            axis=-1,
        ).reshape(*raw.shape[:-2], -1)
        minus = np.stack(
            [raw[..., 0] - raw[..., 3], np.conj(raw[..., 1]) + np.conj(raw[..., 2])],
            axis=-1,
        ).reshape(*raw.shape[:-2], -1)
        return np.concatenate([plus, minus], axis=-1)
    raise UsageError(f"unsupported block length T={T}")


# ---------------------------------------------------------------------------
# Equivalent channel blocks


def _alamouti_block(a, b):
    """Stack [[a, -conj(b)], [b, conj(a)]] over leading axes -> (..., 2, 2)."""
    row0 = np.stack([a, -np.conj(b)], axis=-1)
    row1 = np.stack([b, np.conj(a)], axis=-1)
    return np.stack([row0, row1], axis=-2)


def _anti_alamouti_block(alpha, beta):
    """Stack [[alpha, beta], [conj(beta), -conj(alpha)]] -> (..., 2, 2)."""
    row0 = np.stack([alpha, beta], axis=-1)
    row1 = np.stack([np.conj(beta), -np.conj(alpha)], axis=-1)
    return np.stack([row0, row1], axis=-2)


def dstc_channel_stacks(F: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Stacked equivalent channels for the concurrent-uplink scheme.

    F is (..., M, J), G is (..., M, N).  Returns (..., J, rows, t):
    for M=2, rows=2N and t=2 with blocks
    [[f1 g1n, -conj(f2) g2n], [f2 conj(g2n), conj(f1 g1n)]]; for M in
    {3, 4}, rows=4N and t=4 with the +/- split blocks occupying disjoint
    column pairs (missing fourth antenna enters as zero).
    """
    F = np.asarray(F, dtype=complex)
    G = np.asarray(G, dtype=complex)
    M = F.shape[-2]
    N = G.shape[-1]
    fj = np.moveaxis(F, -1, -2)[..., :, :, None]  # (..., J, M, 1)
    g = G[..., None, :, :]  # (..., 1, M, N)
    if M == 2:
        a = fj[..., 0, :] * g[..., 0, :]  # (..., J, N)
        b = fj[..., 1, :] * np.conj(g[..., 1, :])
        blocks = _alamouti_block(a, b)  # (..., J, N, 2, 2)
        return blocks.reshape(*blocks.shape[:-3], 2 * N, 2)
    if M in (3, 4):
        a1 = fj[..., 0, :] * g[..., 0, :]
        b2 = np.conj(fj[..., 1, :]) * g[..., 1, :]
        b3 = np.conj(fj[..., 2, :]) * g[..., 2, :]
        a4 = fj[..., 3, :] * g[..., 3, :] if M == 4 else np.zeros_like(a1)
        plus = _anti_alamouti_block(a1 + a4, b2 - b3)
        minus = _anti_alamouti_block(a1 - a4, b2 + b3)
        plus = plus.reshape(*plus.shape[:-3], 2 * N, 2)
        minus = minus.reshape(*minus.shape[:-3], 2 * N, 2)
        h = np.zeros(plus.shape[:-2] + (4 * N, 4), dtype=complex)
        h[..., : 2 * N, 0:2] = plus
        h[..., 2 * N :, 2:4] = minus
        return h
    raise UsageError(f"unsupported relay antenna count M={M}")


def tdma_channel_stacks(G: np.ndarray, J: int) -> np.ndarray:
    """Stacked equivalent channels for the TDMA-uplink scheme.

    Source j's group of floor(M/J) relay antennas produces blocks built
    from second-hop coefficients only.  Returns (..., J, rows, t) with
    t in {1, 2, 4} by group size.
    """
    G = np.asarray(G, dtype=complex)
    M = G.shape[-2]
    N = G.shape[-1]
    gs = M // J
    if gs < 1:
        raise UsageError(f"J={J} exceeds M={M}")
    stacks = []
    for j in range(J):
        cols = G[..., j * gs : (j + 1) * gs, :]  # (..., gs, N)
        if gs == 1:
            h = cols[..., 0, :, None]  # (..., N, 1)
        elif gs == 2:
            blocks = _alamouti_block(cols[..., 0, :], np.conj(cols[..., 1, :]))
            h = blocks.reshape(*blocks.shape[:-3], 2 * N, 2)
        elif gs in (3, 4):
            g4 = cols[..., 3, :] if gs == 4 else np.zeros_like(cols[..., 0, :])
            plus = _anti_alamouti_block(cols[..., 0, :] + g4, cols[..., 1, :] - cols[..., 2, :])
            minus = _anti_alamouti_block(cols[..., 0, :] - g4, cols[..., 1, :] + cols[..., 2, :])
            plus = plus.reshape(*plus.shape[:-3], 2 * N, 2)
            minus = minus.reshape(*minus.shape[:-3], 2 * N, 2)
            h = np.zeros(plus.shape[:-2] + (4 * N, 4), dtype=complex)
            h[..., : 2 * N, 0:2] = plus
            h[..., 2 * N :, 2:4] = minus
        else:
            raise UsageError(f"unsupported antenna group size {gs}")
        stacks.append(h)
    return np.stack(stacks, axis=-3)


def gtilde(G: np.ndarray) -> np.ndarray:
    """Effective relay-noise mixing matrix of one split system.

    For (..., M, N) second-hop coefficients, returns (..., 2N, 2M) with
    rows 2n = (g_{1n}, 0, g_{2n}, 0, ...) and rows 2n+1 the conjugate
    pattern shifted by one column.
    """
    G = np.asarray(G, dtype=complex)
    M, N = G.shape[-2], G.shape[-1]
    out = np.zeros(G.shape[:-2] + (2 * N, 2 * M), dtype=complex)
    for n in range(N):
        for i in range(M):
            out[..., 2 * n, 2 * i] = G[..., i, n]
            out[..., 2 * n + 1, 2 * i + 1] = np.conj(G[..., i, n])
    return out


# ---------------------------------------------------------------------------
# Equivalent system assembly


def _dstc_pre_ic_cov(G: np.ndarray, c: float) -> np.ndarray:
    """Pre-IC noise covariance of the recombined concurrent-uplink system."""
    M = G.shape[-2]
    N = G.shape[-1]
    gt = gtilde(G)
    if M == 2:
        return c * c * gt @ dagger(gt) + np.eye(2 * N)
    # the +/- splits double every variance and are mutually uncorrelated
    half = 2.0 * c * c * gt @ dagger(gt) + 2.0 * np.eye(2 * N)
    r = np.zeros(half.shape[:-2] + (4 * N, 4 * N), dtype=complex)
    r[..., : 2 * N, : 2 * N] = half
    r[..., 2 * N :, 2 * N :] = half
    return r


def equiv_system_dstc_icrec(raw, ch: ChannelRealization, cfg: NetworkConfig):
    """Pre-IC equivalent systems for the concurrent-uplink scheme, one per
    source.  All share the same recombined observation and noise
    covariance; H_eff differs per source."""
    design = dstc_design(cfg.M)
    raw = np.asarray(raw, dtype=complex)
    if raw.shape != (cfg.N, design.T):
        raise UsageError(f"raw must be ({cfg.N}, {design.T}), got {raw.shape}")
    if cfg.M not in (2, 3, 4):
        raise UsageError(f"unsupported relay antenna count M={cfg.M}")
    obs = recombine(raw, design.T)
    stacks = dstc_channel_stacks(ch.F, ch.G)
    c = dstc_power_scale(cfg.P, cfg.M, cfg.J)
    r = _dstc_pre_ic_cov(ch.G, c)
    audit = recombination_matrices(cfg.N, design.T)
    spec = symbol_spec(design.T)
    return [
        EquivalentSystem(obs, stacks[j], r, math.sqrt(cfg.P) * c, j, spec, audit)
        for j in range(cfg.J)
    ]


def equiv_system_tdma_icrec(raw, ch: ChannelRealization, cfg: NetworkConfig):
    """Pre-IC equivalent systems for the TDMA-uplink scheme.

    The noise covariance here covers destination noise plus every source's
    forwarded relay-combining noise; after IC the interferers' noise
    vanishes along with their signal, which is what the post-IC covariance
    helpers exploit.
    """
    gs = cfg.M // cfg.J
    design = dstc_design(gs)
    raw = np.asarray(raw, dtype=complex)
    if raw.shape != (cfg.N, design.T):
        raise UsageError(f"raw must be ({cfg.N}, {design.T}), got {raw.shape}")
    obs = recombine(raw, design.T)
    stacks = tdma_channel_stacks(ch.G, cfg.J)
    c1 = tdma_power_scale(cfg.P, cfg.M)
    x = np.sum(np.abs(ch.F) ** 2, axis=-2)  # (J,)
    kappa = 2.0 if design.T == 4 else 1.0
    rows = stacks.shape[-2]
    r = kappa * np.eye(rows, dtype=complex)
    for j in range(cfg.J):
        r = r + (kappa * c1 * c1 / x[j]) * stacks[j] @ dagger(stacks[j])
    audit = recombination_matrices(cfg.N, design.T)
    spec = symbol_spec(design.T)
    return [
        EquivalentSystem(obs, stacks[j], r, math.sqrt(cfg.P) * c1, j, spec, audit)
        for j in range(cfg.J)
    ]


# ---------------------------------------------------------------------------
# Zero-forcing IC matrices


def _block_norms(stack: np.ndarray, t: int) -> np.ndarray:
    """Squared Frobenius norms of the t x t blocks of (..., K*t, t) stacks."""
    shp = stack.shape
    blocks = stack.reshape(*shp[:-2], shp[-2] // t, t, t)
    return np.sum(np.abs(blocks) ** 2, axis=(-2, -1))


def ic_stack_batch(channels: np.ndarray, target: int):
    """Batched iterative IC over (..., J, K*t, t) stacked channels.

    Cancels every source except ``target`` in descending source order.
    Returns (B, bad): B has shape (..., (K-J+1)*t, K*t) and ``bad`` flags
    batch elements that hit a degenerate (near-zero) block and must be
    resampled.
    """
    channels = np.asarray(channels, dtype=complex)
    J = channels.shape[-3]
    t = channels.shape[-1]
    K = channels.shape[-2] // t
    if J > K:
        raise UsageError(f"cannot cancel {J - 1} sources with {K} block rows")
    lead = channels.shape[:-3]
    bmat = np.broadcast_to(np.eye(K * t, dtype=complex), lead + (K * t, K * t)).copy()
    cur = channels.copy()
    bad = np.zeros(lead, dtype=bool)
    order = [j for j in range(J - 1, -1, -1) if j != target]
    k = K
    for q in order:
        stack = cur[..., q, : k * t, :]  # (..., k*t, t)
        blocks = stack.reshape(*lead, k, t, t)
        norms = np.sum(np.abs(blocks) ** 2, axis=(-2, -1))  # (..., k)
        bad |= np.sqrt(norms).min(axis=-1) < DEGENERATE_TOL
        norms = np.maximum(norms, DEGENERATE_TOL**2)
        scaled = (t / norms)[..., None, None] * dagger(blocks)  # (..., k, t, t)
        bi = np.zeros(lead + ((k - 1) * t, k * t), dtype=complex)
        for p in range(k - 1):
            bi[..., p * t : (p + 1) * t, 0:t] = -scaled[..., 0, :, :]
            bi[..., p * t : (p + 1) * t, (p + 1) * t : (p + 2) * t] = scaled[..., p + 1, :, :]
        bmat = bi @ bmat[..., : k * t, :]
        cur = bi[..., None, :, :] @ cur[..., : k * t, :]
        k -= 1
    return bmat, bad


def ic_iterative(eq_channels, N: int, target: int) -> IcMatrix:
    """Iterative zero-forcing IC on per-source stacked channels.

    ``eq_channels`` is a length-J list of (K*t, t) stacks (K block rows per
    receive antenna group, normally K = N).  Cancels sources J, J-1, ...
    skipping ``target``; the result has (N - J + 1)*t rows.
    """
    stacks = np.stack([np.asarray(h, dtype=complex) for h in eq_channels], axis=0)
    J = stacks.shape[0]
    if not 0 <= target < J:
        raise UsageError(f"target {target} out of range for J={J}")
    t = stacks.shape[-1]
    if stacks.shape[-2] != N * t:
        raise UsageError(f"expected {N} blocks of size {t}, got {stacks.shape[-2]} rows")
    norms = _block_norms(stacks, t)
    if np.sqrt(norms).min() < DEGENERATE_TOL:
        raise NumericError("degenerate equivalent-channel block; resample trial")
    b, bad = ic_stack_batch(stacks[None], target)
    if bad[0]:
        raise NumericError("degenerate intermediate block; resample trial")
    return IcMatrix(b[0], frozenset(j for j in range(J) if j != target), J - 1)


def ic_matrix_pairwise(eq_channels, N: int) -> IcMatrix:
    """Single-interferer IC matrix pairing each antenna with the last.

    ``eq_channels`` is the interferer's per-antenna block list (N blocks,
    t x t).  Row block n combines antenna n (scaled +t H*/||H||^2) with
    antenna N (scaled -t H*/||H||^2); the output has (N-1)*t rows.
    """
    blocks = np.stack([np.asarray(h, dtype=complex) for h in eq_channels], axis=0)
    if blocks.shape[0] != N:
        raise UsageError(f"expected {N} blocks, got {blocks.shape[0]}")
    t = blocks.shape[-1]
    if N < 2:
        raise UsageError("pairwise IC needs at least 2 receive antennas")
    norms = np.sum(np.abs(blocks) ** 2, axis=(-2, -1))
    if np.sqrt(norms).min() < DEGENERATE_TOL:
        raise NumericError("zero interferer block; resample trial")
    scaled = (t / norms)[:, None, None] * dagger(blocks)
    b = np.zeros(((N - 1) * t, N * t), dtype=complex)
    for n in range(N - 1):
        b[n * t : (n + 1) * t, n * t : (n + 1) * t] = scaled[n]
        b[n * t : (n + 1) * t, (N - 1) * t :] = -scaled[N - 1]
    return IcMatrix(b, frozenset(), 1)


# ---------------------------------------------------------------------------
# Noise covariances


def noise_cov_dstc_icrec(B, gt, P: float, J: int, M: int, var: float = 1.0) -> np.ndarray:
    """Post-IC noise covariance of one concurrent-uplink (split) system:

    R = var * c^2 * B Gt Gt* B* + var * B B*

    with c the relay amplification; var is 1 for the 2-antenna system and
    2 for each +/- split of the 4-slot codeword.
    """
    B = np.asarray(B, dtype=complex)
    gt = np.asarray(gt, dtype=complex)
    c = dstc_power_scale(P, M, J)
    bg = B @ gt
    return var * (c * c * bg @ dagger(bg) + B @ dagger(B))


def noise_cov_tdma_icrec(B, g1, f_col, P: float, M: int, var: float = 1.0) -> np.ndarray:
    """Post-IC noise covariance of one TDMA-uplink (split) system:

    R = var * (c1^2 / x) * B G1 G1* B* + var * B B*,  x = sum_i |f_i|^2.

    Only the target's relay-combining noise survives because B annihilates
    the interferers' equivalent channels along with their signal.
    """
    B = np.asarray(B, dtype=complex)
    g1 = np.asarray(g1, dtype=complex)
    f = np.asarray(f_col, dtype=complex)
    x = float(np.sum(np.abs(f) ** 2))
    if x <= 0:
        raise NumericError("all-zero uplink column")
    c1 = tdma_power_scale(P, M)
    bg = B @ g1
    return var * ((c1 * c1 / x) * bg @ dagger(bg) + B @ dagger(B))


def propagate_noise_cov(linmap, n_inputs: int, out_dim: int):
    """Covariance of ``linmap`` applied to n i.i.d. CN(0,1) scalars.

    ``linmap(v)`` must be complex-linear in (v, conj(v)); the two halves
    are separated by probing with e_k and i e_k.  Returns (R, pseudo)
    where pseudo is the pseudo-covariance E[n n^T] (zero for circular
    output noise).
    """
    l1 = np.zeros((out_dim, n_inputs), dtype=complex)
    l2 = np.zeros((out_dim, n_inputs), dtype=complex)
    for k in range(n_inputs):
        e = np.zeros(n_inputs, dtype=complex)
        e[k] = 1.0
        a = np.asarray(linmap(e), dtype=complex)
        e[k] = 1.0j
        b = np.asarray(linmap(e), dtype=complex)
        l1[:, k] = 0.5 * (a - 1.0j * b)
        l2[:, k] = 0.5 * (a + 1.0j * b)
    r = l1 @ dagger(l1) + l2 @ dagger(l2)
    pseudo = l1 @ l2.T + l2 @ l1.T
    return r, pseudo


# ---------------------------------------------------------------------------
# ML decoding


def _symbol_components(spec: SymbolSpec):
    """Partition symbols into groups coupled through shared entries."""
    parent = list(range(spec.n_symbols))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for terms in spec.entries:
        idxs = [idx for idx, _, _ in terms]
        for other in idxs[1:]:
            parent[find(idxs[0])] = find(other)
    groups = {}
    for i in range(spec.n_symbols):
        groups.setdefault(find(i), []).append(i)
    comps = []
    for syms in groups.values():
        entries = [
            k
            for k, terms in enumerate(spec.entries)
            if all(idx in syms for idx, _, _ in terms)
        ]
        comps.append((sorted(syms), entries))
    comps.sort()
    return comps


def _candidate_table(spec: SymbolSpec, syms, entries, c: Constellation):
    """All symbol-index combinations for one component and the entry
    values they induce.  Enumeration is lexicographic in symbol indices so
    argmin tie-breaking lands on the lowest indices."""
    consts = [
        c.rotated(default_rotation(c.order)) if spec.rotated[i] else c for i in syms
    ]
    combos = np.array(list(itertools.product(*(range(c.order) for _ in syms))), dtype=np.int64)
    points = np.stack(
        [consts[k].points[combos[:, k]] for k in range(len(syms))], axis=-1
    )  # (n_cand, |syms|)
    pos = {s: k for k, s in enumerate(syms)}
    sv = np.zeros((combos.shape[0], len(entries)), dtype=complex)
    for out_k, ent in enumerate(entries):
        for idx, conj, sign in spec.entries[ent]:
            v = points[:, pos[idx]]
            sv[:, out_k] += sign * (np.conj(v) if conj else v)
    return combos, sv


def ml_decode_batch(obs, h, r, scale, spec: SymbolSpec, c: Constellation, diag_tol=1e-8):
    """Whitened ML over a batch of equivalent systems.

    obs (..., K), h (..., K, t), r (..., K, K).  Returns decoded symbol
    indices (..., n_symbols).  Symbols are searched per coupled component;
    a batch element whose cross-component coupling is not negligible falls
    back to an exhaustive joint search.
    """
    obs = np.asarray(obs, dtype=complex)
    h = np.asarray(h, dtype=complex)
    r = np.asarray(r, dtype=complex)
    ri_obs = solve_psd_stack(r, obs)
    ri_h = solve_psd_stack(r, h)
    w = scale * np.einsum("...kt,...k->...t", np.conj(h), ri_obs)
    q = scale * scale * dagger(h) @ ri_h
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(q))):
        raise NumericError("non-finite whitened metric; resample trial")
    comps = _symbol_components(spec)
    out = np.zeros(obs.shape[:-1] + (spec.n_symbols,), dtype=np.int64)
    # Cross-component couplings must be negligible for the decomposition.
    t = q.shape[-1]
    comp_of = np.zeros(t, dtype=np.int64)
    for ci, (_, entries) in enumerate(comps):
        comp_of[entries] = ci
    diag = np.sqrt(np.maximum(np.einsum("...ii->...i", q).real, 0.0))
    cross = comp_of[:, None] != comp_of[None, :]
    bound = diag_tol * diag[..., :, None] * diag[..., None, :] + 1e-30
    violated = np.any(np.abs(q) * cross > bound, axis=(-2, -1))
    for syms, entries in comps:
        combos, sv = _candidate_table(spec, syms, entries, c)
        qc = q[..., entries, :][..., :, entries]
        wc = w[..., entries]
        quad = np.einsum("ce,...ef,cf->...c", np.conj(sv), qc, sv).real
        lin = 2.0 * np.einsum("ce,...e->...c", np.conj(sv), wc).real
        best = np.argmin(quad - lin, axis=-1)
        out[..., syms] = combos[best]
    if np.any(violated):
        joint_syms = sorted(range(spec.n_symbols))
        joint_entries = list(range(len(spec.entries)))
        combos, sv = _candidate_table(spec, joint_syms, joint_entries, c)
        quad = np.einsum("ce,...ef,cf->...c", np.conj(sv), q, sv).real
        lin = 2.0 * np.einsum("ce,...e->...c", np.conj(sv), w).real
        best = np.argmin(quad - lin, axis=-1)
        joint = combos[best]
        out = np.where(violated[..., None], joint, out)
    return out


def ml_decode(eq: EquivalentSystem, c: Constellation):
    """Decode one equivalent system; returns (symbol indices, bits).

    Bits concatenate each symbol's Gray label in slot order (rotation does
    not change labels).
    """
    if eq.symbols is None:
        raise UsageError("equivalent system carries no symbol layout")
    idx = ml_decode_batch(eq.obs[None], eq.H_eff[None], eq.R_n[None], eq.scale, eq.symbols, c)[0]
    bits = c.labels[idx].reshape(-1)
    return idx, bits


def joint_ml_decode(raw, ch: ChannelRealization, cfg: NetworkConfig, c: Constellation):
    """Exhaustive joint ML over all sources on the pre-IC system.

    Builds the concurrent-uplink equivalent system with every source
    retained, stacks the per-source channels side by side, and searches
    all sources' symbol blocks jointly under the pre-IC noise covariance.
    """
    design = dstc_design(cfg.M)
    if c.order ** (cfg.J * design.T) > 1 << 20:
        raise UsageError("joint search space exceeds 2^20 hypotheses")
    systems = equiv_system_dstc_icrec(raw, ch, cfg)
    h_all = np.concatenate([s.H_eff for s in systems], axis=-1)
    base = systems[0].symbols
    entries = []
    rotated = []
    for j in range(cfg.J):
        entries.extend(base.shifted(j * base.n_symbols).entries)
        rotated.extend(base.rotated)
    spec = SymbolSpec(cfg.J * base.n_symbols, tuple(entries), tuple(rotated))
    idx = ml_decode_batch(
        systems[0].obs[None], h_all[None], systems[0].R_n[None], systems[0].scale, spec, c
    )[0]
    per_source = idx.reshape(cfg.J, base.n_symbols)
    bits = c.labels[per_source].reshape(cfg.J, -1)
    return per_source, bits

"""Relay-side processing.

Two families of relay behavior live here:

* the per-antenna linear transform for concurrent uplink traffic
  (orthogonal / quasi-orthogonal distributed space-time codes, where each
  antenna i emits ``c * (A_i r_i + B_i conj(r_i))`` with no cross-antenna
  mixing), and
* the TDMA uplink variant where the relay first forms a maximum-ratio
  combined soft estimate of each source's symbols and then forwards all
  sources' codewords concurrently on disjoint antenna groups.

A decode-and-forward variant (hard ML decision at the relay) is included
as a comparison baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .airlink import Constellation
from .numerics import NumericError, UsageError

__all__ = [
    "DstcDesign",
    "SoftEstimate",
    "dstc_design",
    "encode_dstc_icrec",
    "dstc_power_scale",
    "tdma_power_scale",
    "mrc_soft_estimate",
    "encode_tdma_icrec",
    "relay_decode_forward",
]


@dataclass(frozen=True)
class DstcDesign:
    """Per-antenna encoding pairs (A_i, B_i) of a T x T signed-permutation
    space-time design; exactly one of A_i, B_i is nonzero for each antenna."""

    T: int
    m_used: int
    A: np.ndarray  # (m_used, T, T) int8
    B: np.ndarray  # (m_used, T, T) int8

    @property
    def pairs(self):
        return [(self.A[i], self.B[i]) for i in range(self.m_used)]

    def validate(self) -> None:
        for i, (a, b) in enumerate(self.pairs):
            nz = (np.any(a), np.any(b))
            if nz[0] == nz[1]:
                raise NumericError(f"antenna {i}: exactly one of A, B must be nonzero")
            m = a if nz[0] else b
            if not (np.all(np.sum(np.abs(m), axis=0) == 1) and np.all(np.sum(np.abs(m), axis=1) == 1)):
                raise NumericError(f"antenna {i}: not a signed permutation")


def _design_pairs(T: int):
    """(A, B) stacks for the full T-antenna design, T a power of two."""
    if T == 1:
        return np.ones((1, 1, 1), dtype=np.int8), np.zeros((1, 1, 1), dtype=np.int8)
    if T == 2:
        a = np.zeros((2, 2, 2), dtype=np.int8)
        b = np.zeros((2, 2, 2), dtype=np.int8)
        a[0] = np.eye(2)
        b[1] = [[0, -1], [1, 0]]
        return a, b
    if T == 4:
        a = np.zeros((4, 4, 4), dtype=np.int8)
        b = np.zeros((4, 4, 4), dtype=np.int8)
        a[0] = np.eye(4)
        a[3] = [[0, 0, 0, 1], [0, 0, -1, 0], [0, -1, 0, 0], [1, 0, 0, 0]]
        b[1] = [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]]
        b[2] = [[0, 0, -1, 0], [0, 0, 0, -1], [1, 0, 0, 0], [0, 1, 0, 0]]
        return a, b
    # ABBA doubling: codeword [[S(sa), S(sb)], [S(sb), S(sa)]].
    ah, bh = _design_pairs(T // 2)
    h = T // 2
    a = np.zeros((T, T, T), dtype=np.int8)
    b = np.zeros((T, T, T), dtype=np.int8)
    for i in range(h):
        a[i, :h, :h] = a[i, h:, h:] = ah[i]
        b[i, :h, :h] = b[i, h:, h:] = bh[i]
        a[h + i, :h, h:] = a[h + i, h:, :h] = ah[i]
        b[h + i, :h, h:] = b[h + i, h:, :h] = bh[i]
    return a, b


def dstc_design(M: int) -> DstcDesign:
    """Design for an M-antenna relay: antennas 1..M of the smallest
    power-of-two orthogonal/quasi-orthogonal family covering M."""
    if M < 1:
        raise UsageError("M must be >= 1")
    T = 1 << max(0, (M - 1)).bit_length()
    a, b = _design_pairs(T)
    return DstcDesign(T, M, a[:M].copy(), b[:M].copy())


def dstc_power_scale(P: float, M: int, J: int) -> float:
    """Relay amplification for the concurrent-uplink encoder.

    c = sqrt(P / (M (J P + 1))) keeps the total average relay power at P
    when the per-antenna input power is J*P + 1; it reduces to
    sqrt(P/(4P+2)) for J=2, M=2 and sqrt(P/(4(JP+1))) for M=4.
    """
    return math.sqrt(P / (M * (J * P + 1.0)))


def tdma_power_scale(P: float, M: int) -> float:
    """Relay amplification sqrt(P / (M P + M)) for the MRC-estimate encoder."""
    return math.sqrt(P / (M * P + M))


def apply_design(design: DstcDesign, received: np.ndarray) -> np.ndarray:
    """Unscaled per-antenna transform A_i r_i + B_i conj(r_i).

    ``received`` has shape (..., m_used, T); so does the result.
    """
    a = design.A.astype(float)
    b = design.B.astype(float)
    return np.einsum("its,...is->...it", a, received) + np.einsum(
        "its,...is->...it", b, np.conj(received)
    )


def encode_dstc_icrec(received, design: DstcDesign, P: float, J: int) -> np.ndarray:
    """Concurrent-uplink relay transform t_i = c (A_i r_i + B_i conj(r_i))."""
    r = np.asarray(received, dtype=complex)
    if r.shape[-2:] != (design.m_used, design.T):
        raise UsageError(
            f"received must be (..., {design.m_used}, {design.T}), got {r.shape}"
        )
    return dstc_power_scale(P, design.m_used, J) * apply_design(design, r)


@dataclass(frozen=True)
class SoftEstimate:
    """MRC output for one source: values = sqrt(P) s + noise."""

    values: np.ndarray  # (T,) or (..., T)
    noise_var: float | np.ndarray  # 1 / sum_i |f_i|^2
    source: int = 0


def mrc_soft_estimate(received, f_col, P: float, source: int = 0) -> SoftEstimate:
    """Coherent combining across relay antennas for one source's slots.

    values = (sum_i conj(f_i) r_i) / (sum_i |f_i|^2); noiseless input
    returns exactly sqrt(P) s.
    """
    r = np.asarray(received, dtype=complex)  # (..., M, T)
    f = np.asarray(f_col, dtype=complex)  # (..., M)
    gain = np.sum(np.abs(f) ** 2, axis=-1)
    if np.any(gain <= 0):
        raise NumericError("all-zero channel column; trial must be resampled")
    values = np.einsum("...i,...it->...t", np.conj(f), r) / gain[..., None]
    return SoftEstimate(values, 1.0 / gain, source)


def encode_tdma_icrec(
    estimates: list[SoftEstimate], design: DstcDesign, P: float, M: int
) -> np.ndarray:
    """Forward all sources' codewords concurrently on disjoint antenna groups.

    Source j's codeword occupies antennas (j-1)*g+1 .. j*g with
    g = floor(M/J); antennas beyond J*g stay silent.  Returns the relay
    transmit matrix, shape (..., M, T).
    """
    J = len(estimates)
    if J > M:
        raise UsageError(f"J={J} sources exceed M={M} relay antennas")
    g = M // J
    if design.m_used != g:
        raise UsageError(f"design uses {design.m_used} antennas, group size is {g}")
    c1 = tdma_power_scale(P, M)
    v0 = np.asarray(estimates[0].values, dtype=complex)
    out = np.zeros(v0.shape[:-1] + (M, design.T), dtype=complex)
    for j, est in enumerate(estimates):
        v = np.asarray(est.values, dtype=complex)[..., None, :]
        out[..., j * g : (j + 1) * g, :] = c1 * apply_design(design, np.broadcast_to(v, v.shape[:-2] + (g, design.T)))
    return out


def relay_decode_forward(
    estimates: list[SoftEstimate],
    constellations: Constellation | list[Constellation],
    P: float,
) -> list[SoftEstimate]:
    """Hard ML decision at the relay: each soft value is replaced by
    sqrt(P) times the nearest scaled constellation point (ties to the
    lowest point index); the residual noise variance becomes zero."""
    hard = []
    for est in estimates:
        v = np.asarray(est.values, dtype=complex)
        cs = constellations if isinstance(constellations, (list, tuple)) else [constellations] * v.shape[-1]
        out = np.empty_like(v)
        for t in range(v.shape[-1]):
            idx = cs[t].nearest(v[..., t] / math.sqrt(P))
            out[..., t] = math.sqrt(P) * cs[t].points[idx]
        hard.append(SoftEstimate(out, np.zeros_like(np.asarray(est.noise_var, dtype=float)), est.source))
    return hard

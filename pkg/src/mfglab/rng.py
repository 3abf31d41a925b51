"""Counter-based random streams.

Each (seed, replication, particle, channel) tuple owns an independent stream
produced by the Philox-4x64-10 block cipher.  Streams are evaluated in bulk
with numpy integer arithmetic, so a draw depends only on its coordinates and
never on evaluation order or worker count.

Layout: key = (seed, replication), counter = (block, particle, channel, 0).
Block ``b`` yields draws ``4b .. 4b+3`` of the stream.  Gaussians come from
the inverse normal CDF applied to 53-bit uniforms on the open interval.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_ROUNDS = 10

# named channels keep the draws of different roles disjoint
CHANNEL_INITIAL = 0
CHANNEL_NOISE = 1
CHANNEL_REFERENCE = 2
CHANNEL_REFERENCE_NOISE = 3


def _mulhilo(a, b):
    """Full 64x64 -> 128 bit product split into (hi, lo) words."""
    a_lo, a_hi = a & _LO32, a >> _S32
    b_lo, b_hi = b & _LO32, b >> _S32
    ll = a_lo * b_lo
    hl = a_hi * b_lo
    lh = a_lo * b_hi
    hh = a_hi * b_hi
    # cannot overflow: each term is bounded so the sum stays below 2**64
    cross = (ll >> _S32) + (hl & _LO32) + lh
    hi = hh + (hl >> _S32) + (cross >> _S32)
    return hi, a * b


def philox4x64(counter, key):
    """Apply the Philox-4x64-10 bijection.

    Parameters
    ----------
    counter : array_like of uint64, shape (4, ...)
    key : array_like of uint64, shape (2, ...)
        Broadcast against ``counter[0]``.

    Returns
    -------
    ndarray of uint64, shape (4, ...)
    """
    c = np.asarray(counter, dtype=np.uint64)
    k = np.asarray(key, dtype=np.uint64)
    c0, c1, c2, c3 = c[0], c[1], c[2], c[3]
    k0 = np.broadcast_to(k[0], c0.shape).copy()
    k1 = np.broadcast_to(k[1], c0.shape).copy()
    with np.errstate(over="ignore"):
        for r in range(_ROUNDS):
            if r:
                k0 += _W0
                k1 += _W1
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3])


def _as_u64(v):
    v = np.asarray(v)
    if np.any(v < 0):
        raise ValueError("stream coordinates must be non-negative")
    return v.astype(np.uint64)


def stream_uniforms(seed, replication, particle, channel, n_draws):
    """Uniforms on (0, 1) for broadcast stream coordinates.

    ``replication`` and ``particle`` broadcast together to a shape ``S``;
    the result has shape ``S + (n_draws,)``.
    """
    rep = _as_u64(replication)
    par = _as_u64(particle)
    rep, par = np.broadcast_arrays(rep, par)
    shape = rep.shape
    n_blocks = -(-int(n_draws) // 4)
    blocks = np.arange(n_blocks, dtype=np.uint64)
    full = shape + (n_blocks,)
    ctr = np.empty((4,) + full, dtype=np.uint64)
    ctr[0] = blocks
    ctr[1] = par[..., None]
    ctr[2] = np.uint64(channel)
    ctr[3] = 0
    key = np.empty((2,) + full, dtype=np.uint64)
    key[0] = np.uint64(seed)
    key[1] = rep[..., None]
    words = philox4x64(ctr, key)
    # (4, ..., blocks) -> (..., blocks, 4) so draw index = 4 * block + word
    words = np.moveaxis(words, 0, -1).reshape(shape + (4 * n_blocks,))[..., :n_draws]
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def stream_normals(seed, replication, particle, channel, n_draws):
    """Standard normals; see :func:`stream_uniforms` for the layout."""
    return ndtri(stream_uniforms(seed, replication, particle, channel, n_draws))

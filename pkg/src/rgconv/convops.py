"""Grid convolution primitives and index-gather ops on the autodiff tape.

Spatial convention: feature arrays are laid out ``[batch, channel, *spatial]``
with 2 or 3 trailing spatial axes. Kernels are centered and odd-sized, and
``conv_nd`` computes cross-correlation: ``out(x) = sum_o k(o) in(x + o)`` with
offsets ``o`` in ``[-(S-1)/2, (S-1)/2]^d``. Padding is ``circular`` (periodic
wrap, the default everywhere in this package) or ``zero``.

The inner loops run one batched matmul per kernel offset, which keeps all the
heavy lifting inside BLAS.
"""

from __future__ import annotations

import itertools

import numpy as np

from .autodiff import Tensor, record
from .errors import ConfigError, ShapeError

__all__ = [
    "conv_nd",
    "conv_transpose_nd",
    "stuffed_conv_nd",
    "zero_stuff",
    "take_last",
    "transform_group_kernel",
    "upsample_linear",
]


def _pad_spatial(arr: np.ndarray, halos, padding: str) -> np.ndarray:
    d = len(halos)
    pads = [(0, 0)] * (arr.ndim - d) + [(h, h) for h in halos]
    if padding == "circular":
        return np.pad(arr, pads, mode="wrap")
    if padding == "zero":
        return np.pad(arr, pads, mode="constant")
    raise ConfigError(f"unknown padding {padding!r}")


def _check_conv_args(x_shape, k_shape, groups: int) -> tuple:
    d = len(k_shape) - 2
    if d not in (2, 3):
        raise ShapeError(f"kernels must have 2 or 3 spatial axes, got {d}")
    if len(x_shape) != d + 2:
        raise ShapeError(f"input rank {len(x_shape)} does not match kernel rank")
    S = k_shape[2:]
    if len(set(S)) != 1 or S[0] % 2 == 0:
        raise ShapeError(f"kernel spatial extent must be square/cubic and odd: {S}")
    if k_shape[0] % groups:
        raise ShapeError("output channels not divisible by groups")
    if x_shape[1] != groups * k_shape[1]:
        raise ShapeError(
            f"input channels {x_shape[1]} != groups {groups} * kernel in {k_shape[1]}"
        )
    if any(dd < S[0] for dd in x_shape[2:]):
        raise ShapeError(f"spatial size {x_shape[2:]} smaller than kernel {S}")
    return d, S


def _conv_fwd(x: np.ndarray, k: np.ndarray, padding: str, groups: int) -> np.ndarray:
    d = k.ndim - 2
    B, D, S = x.shape[0], x.shape[2:], k.shape[2:]
    G = groups
    Ci, Co = k.shape[1], k.shape[0] // groups
    halos = [(s - 1) // 2 for s in S]
    xp = _pad_spatial(x, halos, padding).reshape(
        (B, G, Ci) + tuple(D[i] + 2 * halos[i] for i in range(d))
    )
    kk = k.reshape(G, Co, Ci, -1)
    vol = int(np.prod(D))
    out = np.zeros((B, G, Co, vol), dtype=np.result_type(x, k))
    for t, off in enumerate(np.ndindex(*S)):
        sl = tuple(slice(o, o + D[i]) for i, o in enumerate(off))
        v = xp[(slice(None),) * 3 + sl].reshape(B, G, Ci, vol)
        out += kk[..., t] @ v
    return out.reshape((B, G * Co) + tuple(D))


def _conv_bwd_kernel(
    g: np.ndarray, x: np.ndarray, k_shape, padding: str, groups: int
) -> np.ndarray:
    d = len(k_shape) - 2
    B, D, S = x.shape[0], x.shape[2:], k_shape[2:]
    G = groups
    Ci, Co = k_shape[1], k_shape[0] // groups
    halos = [(s - 1) // 2 for s in S]
    xp = _pad_spatial(x, halos, padding).reshape(
        (B, G, Ci) + tuple(D[i] + 2 * halos[i] for i in range(d))
    )
    vol = int(np.prod(D))
    gr = g.reshape(B, G, Co, vol)
    gk = np.zeros((G, Co, Ci, int(np.prod(S))), dtype=np.result_type(g, x))
    for t, off in enumerate(np.ndindex(*S)):
        sl = tuple(slice(o, o + D[i]) for i, o in enumerate(off))
        v = xp[(slice(None),) * 3 + sl].reshape(B, G, Ci, vol)
        gk[..., t] = (gr @ v.swapaxes(-1, -2)).sum(axis=0)
    return gk.reshape(k_shape)


def _swap_flip_kernel(k: np.ndarray, groups: int) -> np.ndarray:
    d = k.ndim - 2
    G = groups
    kg = k.reshape((G, k.shape[0] // G, k.shape[1]) + k.shape[2:])
    kg = kg.swapaxes(1, 2)
    kg = np.flip(kg, axis=tuple(range(3, 3 + d)))
    return kg.reshape((G * k.shape[1], k.shape[0] // G) + k.shape[2:])


def conv_nd(x: Tensor, kernel: Tensor, padding: str = "circular", groups: int = 1) -> Tensor:
    """Centered cross-correlation, stride 1, output size equal to input size.

    ``x`` is ``[B, groups * C_in, *D]`` and ``kernel`` is
    ``[groups * C_out, C_in, *S]``; the default ``groups=1`` gives the plain
    ``[B, C_in, *D] x [C_out, C_in, *S] -> [B, C_out, *D]`` map.
    """
    _check_conv_args(x.shape, kernel.shape, groups)
    xd, kd = x.data, kernel.data

    def pull(g):
        gx = _conv_fwd(g, _swap_flip_kernel(kd, groups), padding, groups)
        gk = _conv_bwd_kernel(g, xd, kd.shape, padding, groups)
        return gx, gk

    return record("conv_nd", _conv_fwd(xd, kd, padding, groups), (x, kernel), pull)


def zero_stuff(x: Tensor, factor: int = 2) -> Tensor:
    """Insert ``factor - 1`` zeros between samples along every spatial axis."""
    if factor < 1:
        raise ConfigError(f"stuffing factor must be positive, got {factor}")
    d = x.ndim - 2
    if d not in (2, 3):
        raise ShapeError(f"expected [B, C, *spatial] input, got shape {x.shape}")
    out_shape = x.shape[:2] + tuple(s * factor for s in x.shape[2:])
    sl = (slice(None), slice(None)) + (slice(None, None, factor),) * d

    def pull(g):
        return (g[sl].copy(),)

    out = np.zeros(out_shape, dtype=x.dtype)
    out[sl] = x.data
    return record("zero_stuff", out, (x,), pull)


def _phase_taps(d: int):
    """Tap bookkeeping for correlating a 2x zero-stuffed signal with an
    S=3 stencil: output parity class ``phi`` only ever meets the stuffed
    signal's nonzero samples at stencil offsets of matching parity, so each
    (phase, tap) pair reduces to a pointwise product with the unstuffed
    input rolled by 0 or 1 per axis.
    """
    strides = [3 ** (d - 1 - a) for a in range(d)]
    table = []
    for phi in np.ndindex(*(2,) * d):
        taps = []
        for combo in itertools.product(*[(1,) if p == 0 else (0, 2) for p in phi]):
            flat = sum(c * s for c, s in zip(combo, strides))
            shift = tuple((c - 1 + p) // 2 for c, p in zip(combo, phi))
            taps.append((flat, shift))
        table.append((phi, taps))
    return table


def _rolled_views(x: np.ndarray, d: int) -> dict:
    # x is [B, G, Ci, *D]; values are flattened to [B, G, Ci, vol]
    vol = int(np.prod(x.shape[3:]))
    axes = tuple(range(3, 3 + d))
    out = {}
    for s in np.ndindex(*(2,) * d):
        if any(s):
            out[s] = np.roll(x, tuple(-v for v in s), axis=axes).reshape(
                x.shape[:3] + (vol,)
            )
        else:
            out[s] = x.reshape(x.shape[:3] + (vol,))
    return out


def _stuffed_fwd(x: np.ndarray, k: np.ndarray, groups: int) -> np.ndarray:
    d = k.ndim - 2
    B, D = x.shape[0], x.shape[2:]
    G, Ci, Co = groups, k.shape[1], k.shape[0] // groups
    vol = int(np.prod(D))
    kk = k.reshape(G, Co, Ci, -1)
    rolled = _rolled_views(x.reshape((B, G, Ci) + tuple(D)), d)
    out = np.zeros(
        (B, G, Co) + tuple(2 * n for n in D), dtype=np.result_type(x, k)
    )
    for phi, taps in _phase_taps(d):
        acc = np.zeros((B, G, Co, vol), dtype=out.dtype)
        for flat, shift in taps:
            acc += kk[..., flat] @ rolled[shift]
        sl = (slice(None),) * 3 + tuple(slice(p, None, 2) for p in phi)
        out[sl] = acc.reshape((B, G, Co) + tuple(D))
    return out.reshape((B, G * Co) + tuple(2 * n for n in D))


def _stuffed_bwd(
    g: np.ndarray, x: np.ndarray, k: np.ndarray, groups: int
) -> tuple[np.ndarray, np.ndarray]:
    d = k.ndim - 2
    B, D = x.shape[0], x.shape[2:]
    G, Ci, Co = groups, k.shape[1], k.shape[0] // groups
    vol = int(np.prod(D))
    kk = k.reshape(G, Co, Ci, -1)
    rolled = _rolled_views(x.reshape((B, G, Ci) + tuple(D)), d)
    gr = g.reshape((B, G, Co) + tuple(2 * n for n in D))

    gx_by_shift = {
        s: np.zeros((B, G, Ci, vol), dtype=np.result_type(g, k))
        for s in np.ndindex(*(2,) * d)
    }
    gk = np.zeros(kk.shape, dtype=np.result_type(g, x))
    for phi, taps in _phase_taps(d):
        sl = (slice(None),) * 3 + tuple(slice(p, None, 2) for p in phi)
        gphi = np.ascontiguousarray(gr[sl]).reshape(B, G, Co, vol)
        for flat, shift in taps:
            gx_by_shift[shift] += kk[..., flat].swapaxes(-1, -2) @ gphi
            gk[..., flat] += (gphi @ rolled[shift].swapaxes(-1, -2)).sum(axis=0)

    gx = np.zeros((B, G, Ci) + tuple(D), dtype=np.result_type(g, k))
    axes = tuple(range(3, 3 + d))
    for s, acc in gx_by_shift.items():
        block = acc.reshape((B, G, Ci) + tuple(D))
        if any(s):
            block = np.roll(block, s, axis=axes)
        gx += block
    return gx.reshape(x.shape), gk.reshape(k.shape)


def stuffed_conv_nd(
    x: Tensor, kernel: Tensor, padding: str = "circular", groups: int = 1
) -> Tensor:
    """Correlate a 2x zero-stuffed input: equals
    ``conv_nd(zero_stuff(x, 2), kernel, padding, groups)`` with the zero
    terms skipped, so every spatial extent doubles at an eighth (3D) of the
    dense cost. Circular 3-stencils take the fast path; anything else falls
    back to the literal composition.
    """
    d = kernel.ndim - 2
    _check_conv_args(
        x.shape[:2] + tuple(2 * n for n in x.shape[2:]), kernel.shape, groups
    )
    if padding != "circular" or kernel.shape[2] != 3:
        return conv_nd(zero_stuff(x, 2), kernel, padding=padding, groups=groups)
    xd, kd = x.data, kernel.data

    def pull(g):
        return _stuffed_bwd(g, xd, kd, groups)

    return record(
        "stuffed_conv_nd", _stuffed_fwd(xd, kd, groups), (x, kernel), pull
    )


def conv_transpose_nd(x: Tensor, kernel: Tensor, padding: str = "circular") -> Tensor:
    """Stride-2 transposed convolution: doubles every spatial extent.

    ``x`` is ``[B, C_in, *D]``, ``kernel`` is ``[C_in, C_out, *S]`` (odd S).
    Realized as zero stuffing followed by correlation with the spatially
    flipped, channel-swapped kernel, so it is the exact adjoint of the
    corresponding stride-2 strided correlation.
    """
    from .autodiff import flip, transpose

    d = kernel.ndim - 2
    if x.ndim != d + 2:
        raise ShapeError(f"input rank {x.ndim} does not match kernel rank")
    if x.shape[1] != kernel.shape[0]:
        raise ShapeError(
            f"input channels {x.shape[1]} != kernel in channels {kernel.shape[0]}"
        )
    kt = transpose(kernel, (1, 0) + tuple(range(2, 2 + d)))
    kt = flip(kt, tuple(range(2, 2 + d)))
    return stuffed_conv_nd(x, kt, padding=padding)


# ---------------------------------------------------------------------------
# permutation gathers


def _as_index(idx) -> np.ndarray:
    a = np.asarray(idx, dtype=np.int64)
    if a.ndim != 2:
        raise ShapeError(f"index table must be 2D [n_elements, n], got {a.shape}")
    return a


def take_last(x: Tensor, idx, inv=None) -> Tensor:
    """Gather the last axis by each row of ``idx``, stacking rows in front.

    ``x`` has shape ``[..., K]`` and ``idx`` is ``[H, K]`` with permutation
    rows; the result is ``[H, ..., K]`` with ``out[h, ..., t] =
    x[..., idx[h, t]]``. This one primitive covers both kernel rotation
    (``idx = pi``) and group-axis permutation (``idx = sigma``).
    """
    idx = _as_index(idx)
    if idx.shape[1] != x.shape[-1]:
        raise ShapeError(f"index width {idx.shape[1]} != last axis {x.shape[-1]}")
    inv = np.argsort(idx, axis=1) if inv is None else _as_index(inv)

    def pull(g):
        # rows are permutations, so the adjoint is the inverse gather
        expand = (slice(None),) + (None,) * (g.ndim - 2) + (slice(None),)
        back = np.take_along_axis(g, np.broadcast_to(inv[expand], g.shape), axis=-1)
        return (back.sum(axis=0),)

    out = np.moveaxis(x.data[..., idx], -2, 0)
    return record("take_last", np.ascontiguousarray(out), (x,), pull)


def transform_group_kernel(x: Tensor, sigma, pi, sigma_inv=None, pi_inv=None) -> Tensor:
    """Joint gather of the trailing ``[..., H', K]`` axes of a group kernel.

    ``out[h, ..., j, t] = x[..., sigma[h, j], pi[h, t]]``: row ``h`` holds the
    kernel as seen by output group element ``h``.
    """
    sigma, pi = _as_index(sigma), _as_index(pi)
    if x.shape[-2] != sigma.shape[1] or x.shape[-1] != pi.shape[1]:
        raise ShapeError(
            f"kernel trailing axes {x.shape[-2:]} do not match index tables"
        )
    sigma_inv = np.argsort(sigma, axis=1) if sigma_inv is None else _as_index(sigma_inv)
    pi_inv = np.argsort(pi, axis=1) if pi_inv is None else _as_index(pi_inv)
    H = sigma.shape[0]
    mid_shape = x.shape[:-2]

    def pull(g):
        gr = g.reshape(H, -1, sigma.shape[1], pi.shape[1])
        h_ix = np.arange(H)[:, None, None]
        # advanced indices sit at axes (0, 2, 3); the indexed block moves to
        # the front, giving [H, H', K, M]
        gathered = gr[h_ix, :, sigma_inv[:, :, None], pi_inv[:, None, :]]
        back = gathered.sum(axis=0)  # [H', K, M]
        back = np.moveaxis(back, -1, 0)
        return (back.reshape(x.shape),)

    out = x.data[..., sigma[:, :, None], pi[:, None, :]]  # [..., H, H', K]
    out = np.moveaxis(out, -3, 0)
    return record("transform_group_kernel", np.ascontiguousarray(out), (x,), pull)


# ---------------------------------------------------------------------------
# interpolation


def _axis_interp(x: Tensor, axis: int, i0, i1, w) -> Tensor:
    shape = [1] * x.ndim
    shape[axis] = len(w)
    wb = w.reshape(shape)
    x0 = x.data.take(i0, axis=axis)
    x1 = x.data.take(i1, axis=axis)

    def pull(g):
        gx = np.zeros_like(x.data)
        g0 = g * (1.0 - wb)
        g1 = g * wb
        idx0 = tuple(i0 if ax == axis else slice(None) for ax in range(x.ndim))
        np.add.at(gx, idx0, g0.astype(x.dtype, copy=False))
        idx1 = tuple(i1 if ax == axis else slice(None) for ax in range(x.ndim))
        np.add.at(gx, idx1, g1.astype(x.dtype, copy=False))
        return (gx,)

    # x0 + w * (x1 - x0): keeps constant inputs exactly constant
    out = x0 + wb * (x1 - x0)
    return record("axis_interp", out, (x,), pull)


def upsample_linear(x: Tensor, factor: int) -> Tensor:
    """Separable linear upsampling of every spatial axis by ``factor``.

    Endpoints map to endpoints (align-corners convention), so constant fields
    stay exactly constant and linear ramps stay linear.
    """
    if factor < 1:
        raise ConfigError(f"upsampling factor must be positive, got {factor}")
    d = x.ndim - 2
    if d not in (2, 3):
        raise ShapeError(f"expected [B, C, *spatial] input, got shape {x.shape}")
    out = x
    for ax in range(2, 2 + d):
        n = out.shape[ax]
        m = n * factor
        if n == 1:
            pos = np.zeros(m)
        else:
            pos = np.arange(m) * (n - 1) / (m - 1)
        i0 = np.floor(pos).astype(np.int64)
        i1 = np.minimum(i0 + 1, n - 1)
        w = (pos - i0).astype(x.dtype)
        out = _axis_interp(out, ax, i0, i1, w)
    return out

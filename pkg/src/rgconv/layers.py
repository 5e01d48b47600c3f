"""Group-equivariant convolution layers with optional relaxed weights.

Feature maps are laid out ``[batch, channel, group, *spatial]``; plain grids
drop the group axis. Every group layer owns

- a kernel bank over ``L`` filter banks, and
- a relaxed weight tensor ``w`` of shape ``[L, |H|]``.

With ``relaxed=False`` the weights are frozen at exactly 1 and the layer is
an ordinary group convolution: summing the banks with equal unit weights is
bitwise identical to evaluating the relaxed forward, because it is the same
code path. With ``relaxed=True`` the same ``w`` becomes trainable and each
output group element ``h`` mixes the banks with its own coefficients
``w[l, h]``, which breaks strict equivariance exactly where the data asks
for it.

Kernel transforms never interpolate: they gather precomputed index
permutations from the group's :class:`~rgconv.groups.GridActionCache`.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, matmul, mean_, mul, relu, reshape, sum_, transpose
from .convops import (
    conv_nd,
    conv_transpose_nd,
    stuffed_conv_nd,
    take_last,
    transform_group_kernel,
)
from .errors import ConfigError, ShapeError
from .groups import FiniteGroup

__all__ = [
    "LiftingLayer",
    "RelaxedGConvLayer",
    "SeparableRelaxedGConvLayer",
    "GroupUpsampleConv",
    "ConvLayer",
    "ConvTransposeLayer",
    "ReLULayer",
    "group_pool",
    "init_layer",
]


def _check_build(in_channels, out_channels, banks, kernel_size):
    if in_channels < 1 or out_channels < 1:
        raise ConfigError("channel counts must be positive")
    if banks < 1:
        raise ConfigError(f"need at least one filter bank, got {banks}")
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ConfigError(f"kernel size must be odd, got {kernel_size}")


def _uniform(rng, shape, bound, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class LiftingLayer:
    """Grid input to group feature map: one rotated correlation per element.

    Kernels have shape ``[L, C_out, C_in, S^d]``; output element ``h`` sees
    every kernel transformed by ``pi_h`` and mixes banks with ``w[:, h]``.
    """

    def __init__(
        self,
        group: FiniteGroup,
        in_channels: int,
        out_channels: int,
        banks: int = 1,
        kernel_size: int = 3,
        relaxed: bool = False,
        padding: str = "circular",
        dtype=np.float64,
    ):
        _check_build(in_channels, out_channels, banks, kernel_size)
        self.group = group
        self.cache = group.grid_cache(kernel_size)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.banks = banks
        self.kernel_size = kernel_size
        self.relaxed = bool(relaxed)
        self.padding = padding
        self.dtype = dtype
        K = kernel_size ** group.dim
        self.kernels = Tensor(
            np.zeros((banks, out_channels, in_channels, K), dtype=dtype),
            requires_grad=True,
        )
        self.w = Tensor(
            np.ones((banks, group.order), dtype=dtype), requires_grad=self.relaxed
        )

    def init(self, rng) -> None:
        fan_in = self.in_channels * self.kernel_size ** self.group.dim
        self.kernels.data[...] = _uniform(
            rng, self.kernels.shape, 1.0 / np.sqrt(fan_in), self.dtype
        )
        self.w.data[...] = 1.0

    def params(self) -> list[Tensor]:
        return [self.kernels, self.w] if self.relaxed else [self.kernels]

    def forward(self, x: Tensor) -> Tensor:
        d = self.group.dim
        if x.ndim != d + 2:
            raise ShapeError(f"expected [B, C, *spatial] input, got {x.shape}")
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} channels, got {x.shape[1]}")
        B, D = x.shape[0], x.shape[2:]
        H, L, Co = self.group.order, self.banks, self.out_channels
        S = (self.kernel_size,) * d

        kt = take_last(self.kernels, self.cache.pi, self.cache.pi_inv)
        kt = reshape(kt, (H * L * Co, self.in_channels) + S)
        y = conv_nd(x, kt, padding=self.padding)
        y = reshape(y, (B, H, L, Co) + D)
        wr = reshape(transpose(self.w, (1, 0)), (1, H, L, 1) + (1,) * d)
        y = sum_(mul(y, wr), axes=(2,))
        return transpose(y, (0, 2, 1) + tuple(range(3, 3 + d)))

    __call__ = forward


class RelaxedGConvLayer:
    """Group feature to group feature with full (unfactored) kernels.

    Kernels have shape ``[L, C_out, C_in, |H|, S^d]``: a spatial stencil per
    input group element. Output element ``h`` correlates the input against
    the kernel transformed jointly over its group axis (``sigma_h``) and its
    spatial support (``pi_h``).
    """

    def __init__(
        self,
        group: FiniteGroup,
        in_channels: int,
        out_channels: int,
        banks: int = 1,
        kernel_size: int = 3,
        relaxed: bool = True,
        padding: str = "circular",
        dtype=np.float64,
    ):
        _check_build(in_channels, out_channels, banks, kernel_size)
        self.group = group
        self.cache = group.grid_cache(kernel_size)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.banks = banks
        self.kernel_size = kernel_size
        self.relaxed = bool(relaxed)
        self.padding = padding
        self.dtype = dtype
        K = kernel_size ** group.dim
        self.kernels = Tensor(
            np.zeros((banks, out_channels, in_channels, group.order, K), dtype=dtype),
            requires_grad=True,
        )
        self.w = Tensor(
            np.ones((banks, group.order), dtype=dtype), requires_grad=self.relaxed
        )

    def init(self, rng) -> None:
        fan_in = (
            self.in_channels * self.group.order * self.kernel_size ** self.group.dim
        )
        self.kernels.data[...] = _uniform(
            rng, self.kernels.shape, 1.0 / np.sqrt(fan_in), self.dtype
        )
        self.w.data[...] = 1.0

    def params(self) -> list[Tensor]:
        return [self.kernels, self.w] if self.relaxed else [self.kernels]

    def forward(self, x: Tensor) -> Tensor:
        d = self.group.dim
        H, L, Co, Ci = self.group.order, self.banks, self.out_channels, self.in_channels
        if x.ndim != d + 3 or x.shape[1] != Ci or x.shape[2] != H:
            raise ShapeError(
                f"expected [B, {Ci}, {H}, *spatial] group feature, got {x.shape}"
            )
        B, D = x.shape[0], x.shape[3:]
        S = (self.kernel_size,) * d

        kt = transform_group_kernel(
            self.kernels,
            self.cache.sigma,
            self.cache.pi,
            self.cache.sigma_inv,
            self.cache.pi_inv,
        )  # [H, L, Co, Ci, H', K]
        kt = reshape(kt, (H * L * Co, Ci * H) + S)
        xf = reshape(x, (B, Ci * H) + D)
        y = conv_nd(xf, kt, padding=self.padding)
        y = reshape(y, (B, H, L, Co) + D)
        wr = reshape(transpose(self.w, (1, 0)), (1, H, L, 1) + (1,) * d)
        y = sum_(mul(y, wr), axes=(2,))
        return transpose(y, (0, 2, 1) + tuple(range(3, 3 + d)))

    __call__ = forward


class SeparableRelaxedGConvLayer:
    """Relaxed group convolution with rank-1 factored kernels.

    Bank ``l`` factors as ``psi_l(x, h') = psi_t[l](x) * psi_o[l](h')`` with a
    shared spatial stencil ``psi_t [L, S^d]`` and a group/channel mixer
    ``psi_o [L, C_out, C_in, |H|]``. The forward runs in three stages:
    pointwise group-channel mixing (one matmul), a depthwise spatial stencil
    per (h, l) pair, and the relaxed weighted sum over banks. Parameter count
    drops from ``L * C_out * C_in * |H| * S^d`` to
    ``L * (C_out * C_in * |H| + S^d)``.
    """

    def __init__(
        self,
        group: FiniteGroup,
        in_channels: int,
        out_channels: int,
        banks: int = 1,
        kernel_size: int = 3,
        relaxed: bool = True,
        padding: str = "circular",
        dtype=np.float64,
    ):
        _check_build(in_channels, out_channels, banks, kernel_size)
        self.group = group
        self.cache = group.grid_cache(kernel_size)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.banks = banks
        self.kernel_size = kernel_size
        self.relaxed = bool(relaxed)
        self.padding = padding
        self.dtype = dtype
        K = kernel_size ** group.dim
        self.psi_o = Tensor(
            np.zeros((banks, out_channels, in_channels, group.order), dtype=dtype),
            requires_grad=True,
        )
        self.psi_t = Tensor(np.zeros((banks, K), dtype=dtype), requires_grad=True)
        self.w = Tensor(
            np.ones((banks, group.order), dtype=dtype), requires_grad=self.relaxed
        )
        self._ones_co = Tensor(np.ones((1, 1, out_channels, 1), dtype=dtype))

    def init(self, rng) -> None:
        self.psi_o.data[...] = _uniform(
            rng,
            self.psi_o.shape,
            1.0 / np.sqrt(self.in_channels * self.group.order),
            self.dtype,
        )
        self.psi_t.data[...] = _uniform(
            rng,
            self.psi_t.shape,
            1.0 / np.sqrt(self.kernel_size ** self.group.dim),
            self.dtype,
        )
        self.w.data[...] = 1.0

    def params(self) -> list[Tensor]:
        ps = [self.psi_o, self.psi_t]
        return ps + [self.w] if self.relaxed else ps

    def full_kernels(self) -> np.ndarray:
        """The rank-1 kernels materialized to ``[L, Co, Ci, |H|, S^d]``."""
        return self.psi_o.data[..., None] * self.psi_t.data[:, None, None, None, :]

    def forward(self, x: Tensor) -> Tensor:
        d = self.group.dim
        H, L, Co, Ci = self.group.order, self.banks, self.out_channels, self.in_channels
        if x.ndim != d + 3 or x.shape[1] != Ci or x.shape[2] != H:
            raise ShapeError(
                f"expected [B, {Ci}, {H}, *spatial] group feature, got {x.shape}"
            )
        B, D = x.shape[0], x.shape[3:]
        vol = int(np.prod(D))
        S = (self.kernel_size,) * d

        # stage 1: per-position group/channel mixing, one batched matmul
        mixer = take_last(self.psi_o, self.cache.sigma, self.cache.sigma_inv)
        mixer = reshape(mixer, (H * L * Co, Ci * H))
        s = matmul(mixer, reshape(x, (B, Ci * H, vol)))
        s = reshape(s, (B, H * L * Co) + D)

        # stage 2: depthwise stencil; tap row (h, l) is psi_t[l] rotated by h
        taps = take_last(self.psi_t, self.cache.pi, self.cache.pi_inv)  # [H, L, K]
        taps = mul(reshape(taps, (H, L, 1, -1)), self._ones_co)  # share over Co
        kd = reshape(taps, (H * L * Co, 1) + S)
        t = conv_nd(s, kd, padding=self.padding, groups=H * L * Co)

        # stage 3: relaxed weighted sum over banks
        t = reshape(t, (B, H, L, Co) + D)
        wr = reshape(transpose(self.w, (1, 0)), (1, H, L, 1) + (1,) * d)
        t = sum_(mul(t, wr), axes=(2,))
        return transpose(t, (0, 2, 1) + tuple(range(3, 3 + d)))

    __call__ = forward


class GroupUpsampleConv:
    """Stride-2 transposed convolution applied independently to every group
    slice, with the kernel rotated by ``pi_h`` for slice ``h`` so all slices
    stay consistent with the group structure. ``[B, C_in, |H|, *D]`` maps to
    ``[B, C_out, |H|, *2D]``.
    """

    def __init__(
        self,
        group: FiniteGroup,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 3,
        padding: str = "circular",
        dtype=np.float64,
    ):
        _check_build(in_channels, out_channels, 1, kernel_size)
        self.group = group
        self.cache = group.grid_cache(kernel_size)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.relaxed = False
        self.padding = padding
        self.dtype = dtype
        K = kernel_size ** group.dim
        self.kernel = Tensor(
            np.zeros((out_channels, in_channels, K), dtype=dtype), requires_grad=True
        )
        # rotate then flip: transposed conv correlates with the flipped kernel,
        # and reversing row-major flat order flips every spatial axis at once
        self._idx = self.cache.pi[:, ::-1].copy()
        self._idx_inv = np.argsort(self._idx, axis=1)

    def init(self, rng) -> None:
        fan_in = self.in_channels * self.kernel_size ** self.group.dim
        self.kernel.data[...] = _uniform(
            rng, self.kernel.shape, 1.0 / np.sqrt(fan_in), self.dtype
        )

    def params(self) -> list[Tensor]:
        return [self.kernel]

    def forward(self, x: Tensor) -> Tensor:
        d = self.group.dim
        H, Co, Ci = self.group.order, self.out_channels, self.in_channels
        if x.ndim != d + 3 or x.shape[1] != Ci or x.shape[2] != H:
            raise ShapeError(
                f"expected [B, {Ci}, {H}, *spatial] group feature, got {x.shape}"
            )
        B, D = x.shape[0], x.shape[3:]
        S = (self.kernel_size,) * d

        kt = take_last(self.kernel, self._idx, self._idx_inv)  # [H, Co, Ci, K]
        kt = reshape(kt, (H * Co, Ci) + S)
        xt = transpose(x, (0, 2, 1) + tuple(range(3, 3 + d)))
        xt = reshape(xt, (B, H * Ci) + D)
        y = stuffed_conv_nd(xt, kt, padding=self.padding, groups=H)
        D2 = tuple(2 * s for s in D)
        y = reshape(y, (B, H, Co) + D2)
        return transpose(y, (0, 2, 1) + tuple(range(3, 3 + d)))

    __call__ = forward


class ConvLayer:
    """Plain correlation on grids, the non-equivariant counterpart."""

    def __init__(
        self,
        dim: int,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 3,
        padding: str = "circular",
        dtype=np.float64,
    ):
        _check_build(in_channels, out_channels, 1, kernel_size)
        if dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {dim}")
        self.dim = dim
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.relaxed = False
        self.padding = padding
        self.dtype = dtype
        self.kernel = Tensor(
            np.zeros((out_channels, in_channels) + (kernel_size,) * dim, dtype=dtype),
            requires_grad=True,
        )

    def init(self, rng) -> None:
        fan_in = self.in_channels * self.kernel_size ** self.dim
        self.kernel.data[...] = _uniform(
            rng, self.kernel.shape, 1.0 / np.sqrt(fan_in), self.dtype
        )

    def params(self) -> list[Tensor]:
        return [self.kernel]

    def forward(self, x: Tensor) -> Tensor:
        return conv_nd(x, self.kernel, padding=self.padding)

    __call__ = forward


class ConvTransposeLayer:
    """Plain stride-2 transposed convolution (doubles spatial extents)."""

    def __init__(
        self,
        dim: int,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 3,
        padding: str = "circular",
        dtype=np.float64,
    ):
        _check_build(in_channels, out_channels, 1, kernel_size)
        if dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {dim}")
        self.dim = dim
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.relaxed = False
        self.padding = padding
        self.dtype = dtype
        self.kernel = Tensor(
            np.zeros((in_channels, out_channels) + (kernel_size,) * dim, dtype=dtype),
            requires_grad=True,
        )

    def init(self, rng) -> None:
        fan_in = self.in_channels * self.kernel_size ** self.dim
        self.kernel.data[...] = _uniform(
            rng, self.kernel.shape, 1.0 / np.sqrt(fan_in), self.dtype
        )

    def params(self) -> list[Tensor]:
        return [self.kernel]

    def forward(self, x: Tensor) -> Tensor:
        return conv_transpose_nd(x, self.kernel, padding=self.padding)

    __call__ = forward


class ReLULayer:
    relaxed = False

    def params(self) -> list[Tensor]:
        return []

    def forward(self, x: Tensor) -> Tensor:
        return relu(x)

    __call__ = forward


def group_pool(x: Tensor) -> Tensor:
    """Mean over the group axis: ``[B, C, |H|, *D] -> [B, C, *D]``."""
    if x.ndim < 4:
        raise ShapeError(f"expected a group feature map, got shape {x.shape}")
    return mean_(x, axes=(2,))


def init_layer(layer, seed_or_rng) -> None:
    """Initialize a layer's parameters deterministically.

    Kernels are uniform in ``[-b, b]`` with ``b = 1/sqrt(fan_in)``; relaxed
    weights start at exactly 1 so every layer begins strictly equivariant.
    """
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    layer.init(rng)

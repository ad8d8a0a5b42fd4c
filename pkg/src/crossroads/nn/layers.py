"""Minimal layer zoo: valid-padding convolution, dense, ReLU, dueling head.

Forward passes cache what the matching backward pass needs; parameters and
gradients live in per-layer dicts keyed by tensor name.  The convolution is
an im2col + GEMM formulation; the direct quadruple-loop reference used to
verify it lives in the test suite.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolationError


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    if size < kernel:
        raise ContractViolationError(f"input {size} smaller than kernel {kernel}")
    return (size - kernel) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(B, C, H, W) -> (B, OH*OW, C*kh*kw) patch matrix."""
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]  # (B, C, OH, OW, kh, kw)
    b, c, oh, ow = windows.shape[:4]
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        b, oh * ow, c * kh * kw
    )


def col2im(dcols: np.ndarray, x_shape, kh: int, kw: int, stride: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter patch gradients back onto the image."""
    b, c, h, w = x_shape
    oh = conv_output_size(h, kh, stride)
    ow = conv_output_size(w, kw, stride)
    # one big transpose up front so the scatter loop works on contiguous slices
    dcols = np.ascontiguousarray(
        dcols.reshape(b, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    )
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    for ki in range(kh):
        for kj in range(kw):
            dx[:, :, ki: ki + stride * oh: stride, kj: kj + stride * ow: stride] += \
                dcols[:, :, :, :, ki, kj]
    return dx


class Layer:
    params: dict[str, np.ndarray]

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Returns d(loss)/d(input) and fills ``self.grads``."""
        raise NotImplementedError

    @property
    def grads(self) -> dict[str, np.ndarray]:
        return self._grads


class Conv2D(Layer):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int,
                 rng: np.random.Generator, dtype=np.float32):
        fan_in = in_ch * kernel * kernel
        bound = np.sqrt(6.0 / fan_in)  # He-uniform, ReLU follows every conv
        self.params = {
            "W": rng.uniform(-bound, bound, (out_ch, fan_in)).astype(dtype),
            "b": np.zeros(out_ch, dtype=dtype),
        }
        self.kernel = kernel
        self.stride = stride
        self.in_ch = in_ch
        self.out_ch = out_ch
        self._grads = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.in_ch:
            raise ContractViolationError(
                f"expected {self.in_ch} input channels, got {x.shape[1]}"
            )
        b, _, h, w = x.shape
        oh = conv_output_size(h, self.kernel, self.stride)
        ow = conv_output_size(w, self.kernel, self.stride)
        self._x_shape = x.shape
        self._cols = im2col(x, self.kernel, self.kernel, self.stride)
        cols2d = self._cols.reshape(-1, self._cols.shape[-1])
        y = cols2d @ self.params["W"].T + self.params["b"]
        return np.ascontiguousarray(
            y.reshape(b, oh * ow, self.out_ch).transpose(0, 2, 1)
        ).reshape(b, self.out_ch, oh, ow)

    def backward(self, dy: np.ndarray, need_dx: bool = True) -> np.ndarray | None:
        b = dy.shape[0]
        dyf = np.ascontiguousarray(
            dy.reshape(b, self.out_ch, -1).transpose(0, 2, 1)
        ).reshape(-1, self.out_ch)  # (B*OHOW, F)
        cols2d = self._cols.reshape(-1, self._cols.shape[-1])
        self._grads = {"W": dyf.T @ cols2d, "b": dyf.sum(axis=0)}
        if not need_dx:
            return None
        dcols = dyf @ self.params["W"]
        return col2im(dcols, self._x_shape, self.kernel, self.kernel, self.stride)


class ReLU(Layer):
    params: dict[str, np.ndarray] = {}
    _grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, x.dtype.type(0))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, dy.dtype.type(0))


class Flatten(Layer):
    params: dict[str, np.ndarray] = {}
    _grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy.reshape(self._shape)


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 dtype=np.float32, head: bool = False):
        # He-uniform for hidden (ReLU) layers, +-1/sqrt(fan_in) for linear heads
        bound = (1.0 / np.sqrt(in_dim)) if head else np.sqrt(6.0 / in_dim)
        self.params = {
            "W": rng.uniform(-bound, bound, (out_dim, in_dim)).astype(dtype),
            "b": np.zeros(out_dim, dtype=dtype),
        }
        self._grads = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self._grads = {"W": dy.T @ self._x, "b": dy.sum(axis=0)}
        return dy @ self.params["W"]


class DuelingHead(Layer):
    """State-value and advantage heads combined as Q = V + (A - mean(A))."""

    def __init__(self, in_dim: int, n_actions: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.value = Dense(in_dim, 1, rng, dtype, head=True)
        self.advantage = Dense(in_dim, n_actions, rng, dtype, head=True)
        self.n_actions = n_actions
        self.params = {}  # exposed through sublayers

    def forward(self, x: np.ndarray):
        v = self.value.forward(x)            # (B, 1)
        a = self.advantage.forward(x)        # (B, m)
        q = v + a - a.mean(axis=1, keepdims=True)
        return q, v[:, 0], a

    def backward(self, dq: np.ndarray) -> np.ndarray:
        dv = dq.sum(axis=1, keepdims=True)
        da = dq - dq.sum(axis=1, keepdims=True) / self.n_actions
        return self.value.backward(dv) + self.advantage.backward(da)

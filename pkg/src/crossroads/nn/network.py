"""The dueling Q-network: three conv blocks, one hidden dense layer, two heads.

Architectures are described by a plain dict so they can travel inside
checkpoints; ``standard_architecture`` produces the default layer stack for
each supported input resolution (strides shrink with the frame size, the
layer pattern stays the same).
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractViolationError
from .layers import Conv2D, Dense, DuelingHead, Flatten, ReLU, conv_output_size

# (filters, kernel, stride) triples per input resolution
_CONV_STACKS = {
    48: ((32, 8, 4), (64, 4, 2), (64, 3, 1)),
    32: ((32, 8, 2), (64, 4, 2), (64, 3, 1)),
    24: ((32, 8, 2), (64, 4, 2), (64, 3, 1)),
    16: ((32, 8, 2), (64, 3, 1), (64, 3, 1)),
}


def standard_architecture(resolution: int, in_channels: int = 9,
                          n_actions: int = 2, hidden: int = 512) -> dict:
    if resolution not in _CONV_STACKS:
        raise ContractViolationError(f"no architecture for resolution {resolution}")
    return {
        "input_shape": [in_channels, resolution, resolution],
        "conv": [list(t) for t in _CONV_STACKS[resolution]],
        "hidden": hidden,
        "n_actions": n_actions,
    }


class DuelingQNetwork:
    def __init__(self, arch: dict, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.arch = arch
        self.dtype = dtype
        c, h, w = arch["input_shape"]
        self.layers: list = []
        self._layer_names: list[str] = []
        for i, (filters, kernel, stride) in enumerate(arch["conv"]):
            self.layers.append(Conv2D(c, filters, kernel, stride, rng, dtype))
            self._layer_names.append(f"conv{i}")
            self.layers.append(ReLU())
            self._layer_names.append(f"relu{i}")
            h = conv_output_size(h, kernel, stride)
            w = conv_output_size(w, kernel, stride)
            c = filters
        self.layers.append(Flatten())
        self._layer_names.append("flatten")
        flat = c * h * w
        self.layers.append(Dense(flat, arch["hidden"], rng, dtype))
        self._layer_names.append("fc0")
        self.layers.append(ReLU())
        self._layer_names.append("fc0_relu")
        self.head = DuelingHead(arch["hidden"], arch["n_actions"], rng, dtype)

    # -- passes -----------------------------------------------------------

    def forward(self, x: np.ndarray):
        """Returns (Q, V, A); caches activations for a subsequent backward."""
        x = np.asarray(x, dtype=self.dtype)
        expected = tuple(self.arch["input_shape"])
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ContractViolationError(
                f"input shape {x.shape[1:]} does not match network {expected}"
            )
        for layer in self.layers:
            x = layer.forward(x)
        return self.head.forward(x)

    def q_values(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward_mse(self, actions: np.ndarray, targets: np.ndarray,
                     q: np.ndarray) -> float:
        """Gradient of mean((target - Q[i, a_i])^2) through the whole net.

        ``q`` must come from the immediately preceding ``forward`` call.
        Returns the loss; per-parameter gradients are left on the layers.
        """
        targets = np.asarray(targets, dtype=self.dtype)
        if not np.all(np.isfinite(targets)):
            raise ContractViolationError("non-finite target value")
        b = len(actions)
        taken = q[np.arange(b), actions]
        err = taken - targets
        loss = float(np.mean(err.astype(np.float64) ** 2))
        dq = np.zeros_like(q)
        dq[np.arange(b), actions] = (2.0 / b) * err
        dx = self.head.backward(dq)
        for i in range(len(self.layers) - 1, 0, -1):
            dx = self.layers[i].backward(dx)
        first = self.layers[0]
        if isinstance(first, Conv2D):
            first.backward(dx, need_dx=False)  # input gradient is never used
        else:
            first.backward(dx)
        return loss

    # -- parameter access -------------------------------------------------

    def _blocks(self):
        for name, layer in zip(self._layer_names, self.layers):
            if layer.params:
                yield name, layer
        yield "head_v", self.head.value
        yield "head_a", self.head.advantage

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{name}/{k}": v for name, layer in self._blocks()
                for k, v in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{name}/{k}": v for name, layer in self._blocks()
                for k, v in layer.grads.items()}

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        own = self.parameters()
        if set(params) != set(own):
            raise ContractViolationError("parameter name mismatch")
        for key, value in params.items():
            if own[key].shape != value.shape:
                raise ContractViolationError(f"shape mismatch for {key}")
            own[key][...] = value.astype(self.dtype)

    def clone(self) -> "DuelingQNetwork":
        twin = DuelingQNetwork(self.arch, np.random.default_rng(0), self.dtype)
        twin.load_parameters(self.parameters())
        return twin

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def describe(self) -> str:
        lines = [f"input: {tuple(self.arch['input_shape'])}"]
        c, h, w = self.arch["input_shape"]
        for filters, kernel, stride in self.arch["conv"]:
            h = conv_output_size(h, kernel, stride)
            w = conv_output_size(w, kernel, stride)
            lines.append(
                f"conv {filters} filters {kernel}x{kernel} stride {stride} relu"
                f" -> {filters}x{h}x{w}"
            )
            c = filters
        lines.append(f"dense {self.arch['hidden']} relu")
        lines.append("dense 1 linear (state value)")
        lines.append(f"dense {self.arch['n_actions']} linear (advantages)")
        lines.append(f"total parameters: {self.num_parameters()}")
        return "\n".join(lines)

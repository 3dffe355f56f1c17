"""Minimal dense-network kit: MLPs with hand-written backprop, Adam, weight IO.

Everything is plain numpy on 2D batches (rows = samples). Layers are linear
with ReLU hidden activations and a linear output. Forward passes return a
cache that the matching backward pass consumes, so gradients are exact up to
floating-point roundoff and checkable against finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

_DTYPE_CODES = {np.dtype("<f8"): 0, np.dtype("<f4"): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_WEIGHTS_MAGIC = b"MPWT"
_WEIGHTS_VERSION = 1


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass
class MlpParams:
    """Weight matrices (in_dim, out_dim) and bias rows for one MLP."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def flat(self) -> list[np.ndarray]:
        """Interleaved [W1, b1, W2, b2, ...] view for the optimizer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


def init_mlp(sizes: tuple[int, ...], rng: np.random.Generator, dtype=np.float64) -> MlpParams:
    """He-uniform weights, zero biases. sizes = (d_in, hidden..., d_out)."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        weights.append(w.astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpParams(weights=weights, biases=biases)


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Run the net on x (batch, d_in). Returns (output, cache for backward)."""
    cache = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        pre = h @ w + b
        cache.append((h, pre))
        h = pre if i == last else relu(pre)
    return h, cache


def mlp_backward(params: MlpParams, cache: list, grad_out: np.ndarray) -> tuple[np.ndarray, MlpParams]:
    """Backprop grad_out (batch, d_out) through a cached forward pass.

    Returns (grad wrt input, gradients shaped like the parameters).
    """
    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    g = grad_out
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        inp, pre = cache[i]
        if i != last:
            g = g * (pre > 0)
        grad_w[i] = inp.T @ g
        grad_b[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return g, MlpParams(weights=grad_w, biases=grad_b)


@dataclass
class AdamState:
    """First/second moment accumulators for a flat list of arrays."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_init(arrays: list[np.ndarray], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    state.m = [np.zeros_like(a) for a in arrays]
    state.v = [np.zeros_like(a) for a in arrays]
    return state


def adam_step(state: AdamState, arrays: list[np.ndarray], grads: list[np.ndarray],
              lr: float | None = None) -> None:
    """One in-place Adam update with bias correction."""
    if len(arrays) != len(state.m) or len(arrays) != len(grads):
        raise ValueError("array/grad/state length mismatch")
    state.step += 1
    step_lr = state.lr if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / corr1
        v_hat = v / corr2
        a -= step_lr * m_hat / (np.sqrt(v_hat) + state.eps)


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict[str, str] | None = None) -> None:
    """Write named float arrays plus string metadata to a small binary file.

    Fixed little-endian layout with a magic/version header; byte output is a
    pure function of the inputs, so identical runs produce identical files.
    """
    meta = meta or {}
    with open(path, "wb") as fh:
        fh.write(_WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", _WEIGHTS_VERSION))
        fh.write(struct.pack("<I", len(meta)))
        for key in sorted(meta):
            for text in (key, str(meta[key])):
                blob = text.encode("utf-8")
                fh.write(struct.pack("<H", len(blob)))
                fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name])
            dt = arr.dtype.newbyteorder("<")
            if dt not in _DTYPE_CODES:
                raise ValueError(f"unsupported dtype {arr.dtype} for array {name!r}")
            blob = name.encode("utf-8")
            fh.write(struct.pack("<H", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<BB", _DTYPE_CODES[dt], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype(dt, copy=False).tobytes())


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read a file written by save_arrays. Returns (arrays, metadata)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _WEIGHTS_MAGIC:
            raise ValueError(f"{path}: not a weights file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _WEIGHTS_VERSION:
            raise ValueError(f"{path}: unsupported weights version {version}")

        def read_str() -> str:
            (n,) = struct.unpack("<H", fh.read(2))
            return fh.read(n).decode("utf-8")

        (n_meta,) = struct.unpack("<I", fh.read(4))
        meta = {}
        for _ in range(n_meta):
            key = read_str()
            meta[key] = read_str()
        (n_arrays,) = struct.unpack("<I", fh.read(4))
        arrays = {}
        for _ in range(n_arrays):
            name = read_str()
            code, ndim = struct.unpack("<BB", fh.read(2))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            dt = _CODE_DTYPES[code]
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(count * dt.itemsize), dtype=dt)
            arrays[name] = data.reshape(shape).copy()
    return arrays, meta

"""Classifier head: a 4-layer perceptron with hand-derived backprop and Adam.

Compute is float64 end to end; weight files store float32. The rectifier's
subgradient at its kink is fixed at 0 (derivative of max(0, x) taken as 0
when x == 0).

Weight file layout (little-endian)::

    magic    8 bytes  b"USAMWT01"
    n_dims   u32
    dims     n_dims x u32          e.g. [E, h1, h2, h3, C]
    payload  per layer: W (dims[i] x dims[i+1] f32 row-major), b (dims[i+1] f32)
    crc      u32  crc32 of payload
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import BadDims, BadMagic, ChecksumMismatch, DimsMismatch, ShapeMismatch, TruncatedRecord

WEIGHTS_MAGIC = b"USAMWT01"


@dataclass
class MlpParams:
    dims: tuple[int, ...]
    weights: list[np.ndarray]   # weights[i]: (dims[i], dims[i+1])
    biases: list[np.ndarray]    # biases[i]: (dims[i+1],)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def flat_f32(self) -> bytes:
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
            chunks.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
        return b"".join(chunks)

    def content_hash(self) -> str:
        """sha256 over the float64 parameter bytes; changes iff params change."""
        h = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            h.update(np.ascontiguousarray(w, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass
class AdamState:
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: MlpParams, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(b) for b in params.biases],
            t=0,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


@dataclass
class ForwardCache:
    x: np.ndarray                      # (n, E) input batch
    pre_activations: list[np.ndarray]  # z_l per layer, (n, dims[l+1])
    activations: list[np.ndarray]      # a_l per hidden layer (post-rectifier)


def _check_dims(dims) -> tuple[int, ...]:
    dims = tuple(int(x) for x in dims)
    if len(dims) < 2 or any(x < 1 for x in dims):
        raise BadDims(f"invalid dimension chain {dims}")
    return dims


def init_params(seed: int, dims) -> MlpParams:
    """Fan-in-scaled uniform weights in (-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    dims = _check_dims(dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(dims, weights, biases)


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Logits for a batch of rows; rows are independent.

    Rectifier on all layers but the last, identity output layer.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dims[0]:
        raise ShapeMismatch(f"input {x.shape} vs expected (n, {params.dims[0]})")
    pre, act = [], []
    a = x
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre.append(z)
        if l < last:
            a = np.maximum(z, 0.0)
            act.append(a)
    logits = pre[-1]
    return logits, ForwardCache(x, pre, act)


def backward(params: MlpParams, cache: ForwardCache, dlogits: np.ndarray) -> MlpParams:
    """Parameter gradients for the batch whose cache is given.

    dlogits is dLoss/dlogits, shape (n, C); any batch averaging must already
    be folded into it.
    """
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != cache.pre_activations[-1].shape:
        raise ShapeMismatch(
            f"dlogits {dlogits.shape} vs logits {cache.pre_activations[-1].shape}"
        )
    grads_w = [None] * params.n_layers
    grads_b = [None] * params.n_layers
    delta = dlogits
    for l in range(params.n_layers - 1, -1, -1):
        a_prev = cache.activations[l - 1] if l > 0 else cache.x
        grads_w[l] = a_prev.T @ delta
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l].T) * (
                cache.pre_activations[l - 1] > 0.0
            )
    return MlpParams(params.dims, grads_w, grads_b)


def adam_step(
    params: MlpParams, grads: MlpParams, state: AdamState, lr: float
) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; mutates params and state in place."""
    if grads.dims != params.dims:
        raise ShapeMismatch(f"grad dims {grads.dims} vs params {params.dims}")
    state.t += 1
    b1, b2, eps, t = state.beta1, state.beta2, state.eps, state.t
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    pairs = [
        (params.weights, grads.weights, state.m_weights, state.v_weights),
        (params.biases, grads.biases, state.m_biases, state.v_biases),
    ]
    for target, grad, ms, vs in pairs:
        for p, g, m, v in zip(target, grad, ms, vs):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def save_weights(params: MlpParams, path) -> None:
    payload = params.flat_f32()
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<I", len(params.dims)))
        f.write(struct.pack(f"<{len(params.dims)}I", *params.dims))
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload)))


def load_weights(path, expect_dims=None) -> MlpParams:
    """Load a weight file; raises DimsMismatch when expect_dims disagrees."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(WEIGHTS_MAGIC) + 4:
        raise TruncatedRecord("weight file too short for header")
    if data[: len(WEIGHTS_MAGIC)] != WEIGHTS_MAGIC:
        raise BadMagic(f"expected magic {WEIGHTS_MAGIC!r}")
    pos = len(WEIGHTS_MAGIC)
    (n_dims,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if n_dims < 2 or pos + 4 * n_dims > len(data):
        raise DimsMismatch(f"weight file declares {n_dims} dims")
    dims = struct.unpack_from(f"<{n_dims}I", data, pos)
    pos += 4 * n_dims
    if expect_dims is not None and tuple(expect_dims) != dims:
        raise DimsMismatch(f"file dims {dims} vs expected {tuple(expect_dims)}")
    n_params = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    payload_len = 4 * n_params
    if pos + payload_len + 4 > len(data):
        raise TruncatedRecord("weight payload extends past end of file")
    payload = data[pos : pos + payload_len]
    (crc,) = struct.unpack_from("<I", data, pos + payload_len)
    if zlib.crc32(payload) != crc:
        raise ChecksumMismatch("weight payload checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    weights, biases = [], []
    at = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[at : at + fan_in * fan_out].reshape(fan_in, fan_out))
        at += fan_in * fan_out
        biases.append(flat[at : at + fan_out].copy())
        at += fan_out
    return MlpParams(tuple(dims), weights, biases)

"""Desk-scale encoder/decoder networks with hand-derived gradients, the
2-bit shared-codebook latent quantizer, SGCS loss, and an Adam optimizer.

Two encoder families share one interface: "dense_a" flattens the block and
runs a plain MLP; "shared_b" applies one weight-shared affine per sub-band
first (the convolution-like family). The decoder reconstructs a block and
renormalizes every sub-band to a unit-norm complex vector by construction.

All math is float64; model files store f32 (see save_model / save_codebook).
A block sample is a [14, 16] real array: 14 sub-bands, 8 antennas with
interleaved (re, im) pairs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .constants import (BLOCK_INPUT_DIM, BLOCK_SUBBANDS, LATENT_DIM, N_TX)

DENSE_A = "dense_a"
SHARED_B = "shared_b"
ENCODER_FAMILIES = (DENSE_A, SHARED_B)

ENCODER_ID_MAX = 15

MODEL_FILE_MAGIC = b"CSMW"
MODEL_FILE_VERSION = 1
CODEBOOK_FILE_MAGIC = b"CSQC"
CODEBOOK_FILE_VERSION = 1

_FAMILY_CODES = {DENSE_A: 0, SHARED_B: 1, "decoder": 2}
_FAMILY_NAMES = {v: k for k, v in _FAMILY_CODES.items()}


# ---------------------------------------------------------------------------
# Domain types


@dataclass
class BlockSample:
    """One (layer, block) compression target: [14, 16] reals, unit-norm rows."""

    x: np.ndarray
    layer_index: int

    def validate(self):
        if self.x.shape != (BLOCK_SUBBANDS, 2 * N_TX):
            raise ValueError(f"block shape {self.x.shape}")
        norms = np.sqrt(np.sum(self.x ** 2, axis=1))
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("sub-band rows are not unit norm within 1e-6")
        if not 0 <= self.layer_index <= 3:
            raise ValueError(f"layer_index {self.layer_index} out of range")


@dataclass
class LatentBlock:
    """Continuous 64-value latent, every entry in (-1, 1)."""

    z: np.ndarray

    def validate(self):
        if self.z.shape != (LATENT_DIM,):
            raise ValueError(f"latent shape {self.z.shape}")
        if not np.all(np.isfinite(self.z)) or np.any(np.abs(self.z) >= 1.0):
            raise ValueError("latent entries must be finite and in (-1, 1)")


@dataclass
class QuantizedBlock:
    """64 two-bit indices (128 bits of information)."""

    indices: np.ndarray

    def validate(self):
        if self.indices.shape != (LATENT_DIM,):
            raise ValueError(f"index shape {self.indices.shape}")
        if self.indices.min() < 0 or self.indices.max() > 3:
            raise ValueError("indices out of 0..3")


@dataclass
class QuantCodebook:
    """Shared quantizer levels (cell midpoints) and right-exclusive edges."""

    levels: np.ndarray
    edges: np.ndarray
    lo: float = -1.0
    hi: float = 1.0

    def validate(self):
        if np.any(np.diff(self.levels) <= 0) or np.any(np.diff(self.edges) <= 0):
            raise ValueError("levels and edges must be strictly increasing")
        if len(self.levels) != len(self.edges) + 1:
            raise ValueError("need one more level than edges")
        bounds = np.concatenate(([self.lo], self.edges, [self.hi]))
        mids = 0.5 * (bounds[:-1] + bounds[1:])
        if not np.allclose(self.levels, mids, atol=1e-9):
            raise ValueError("levels are not cell midpoints of the extended edges")


def default_codebook() -> QuantCodebook:
    """Uniform 4-level codebook on [-1, 1]: edges (-0.5, 0, 0.5)."""
    return QuantCodebook(levels=np.array([-0.75, -0.25, 0.25, 0.75]),
                         edges=np.array([-0.5, 0.0, 0.5]))


@dataclass
class QuantTelemetry:
    """Counts inputs clamped to the quantizer domain."""

    clamped: int = 0
    total: int = 0


@dataclass
class Affine:
    w: np.ndarray  # [out, in]
    b: np.ndarray  # [out]


@dataclass
class EncoderModel:
    family: str
    encoder_id: int
    layers: list[Affine] = field(default_factory=list)


@dataclass
class DecoderModel:
    id_dims: int
    layers: list[Affine] = field(default_factory=list)


def model_params(model) -> dict[str, np.ndarray]:
    """Flat name -> array view of every parameter tensor."""
    out = {}
    for i, layer in enumerate(model.layers):
        out[f"w{i}"] = layer.w
        out[f"b{i}"] = layer.b
    return out


# ---------------------------------------------------------------------------
# Initialization


def _init_layers(dims, rng) -> list[Affine]:
    layers = []
    for rows, cols in dims:
        bound = np.sqrt(3.0 / cols)
        w = rng.uniform(-bound, bound, size=(rows, cols))
        layers.append(Affine(w, np.zeros(rows)))
    return layers


def encoder_layer_dims(family: str, hidden=None):
    if family == DENSE_A:
        h0, h1 = hidden if hidden is not None else (256, 128)
        return [(h0, BLOCK_INPUT_DIM), (h1, h0), (LATENT_DIM, h1)]
    if family == SHARED_B:
        h0, h1 = hidden if hidden is not None else (32, 128)
        return [(h0, 2 * N_TX), (h1, BLOCK_SUBBANDS * h0), (LATENT_DIM, h1)]
    raise ValueError(f"unknown encoder family {family!r}")


def init_encoder(family: str, encoder_id: int = 0, seed: int = 0,
                 hidden=None) -> EncoderModel:
    """Symmetric-uniform init scaled by 1/sqrt(fan_in); biases zero."""
    if not 0 <= encoder_id <= ENCODER_ID_MAX:
        raise ValueError(f"encoder_id {encoder_id} out of 0..{ENCODER_ID_MAX}")
    rng = np.random.default_rng(seed)
    return EncoderModel(family, encoder_id, _init_layers(encoder_layer_dims(family, hidden), rng))


def decoder_layer_dims(id_dims: int, hidden=None):
    h0, h1 = hidden if hidden is not None else (256, 256)
    return [(h0, LATENT_DIM + id_dims), (h1, h0), (BLOCK_INPUT_DIM, h1)]


def init_decoder(id_dims: int = 0, seed: int = 0, hidden=None) -> DecoderModel:
    if id_dims not in (0, 1):
        raise ValueError("id_dims must be 0 (dedicated) or 1 (common)")
    rng = np.random.default_rng(seed)
    return DecoderModel(id_dims, _init_layers(decoder_layer_dims(id_dims, hidden), rng))


# ---------------------------------------------------------------------------
# Quantizer


def quantize_array(z: np.ndarray, cb: QuantCodebook,
                   telemetry: QuantTelemetry | None = None) -> np.ndarray:
    """Map values to cell indices (edges right-exclusive); domain clamped."""
    z = np.asarray(z)
    if telemetry is not None:
        telemetry.clamped += int(np.sum((z < cb.lo) | (z > cb.hi)))
        telemetry.total += z.size
    clipped = np.clip(z, cb.lo, cb.hi)
    return np.searchsorted(cb.edges, clipped, side="right").astype(np.int64)


def dequantize_array(idx: np.ndarray, cb: QuantCodebook) -> np.ndarray:
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= len(cb.levels)):
        raise ValueError("quantizer index out of range")
    return np.asarray(cb.levels, dtype=np.float64)[idx]


def quantize(z: LatentBlock, cb: QuantCodebook,
             telemetry: QuantTelemetry | None = None) -> QuantizedBlock:
    return QuantizedBlock(quantize_array(z.z, cb, telemetry))


def dequantize(q: QuantizedBlock, cb: QuantCodebook) -> LatentBlock:
    return LatentBlock(dequantize_array(q.indices, cb))


# ---------------------------------------------------------------------------
# Forward / backward passes (hand-derived, no autodiff)


def _check_finite(name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite values in {name}")


def encoder_forward(model: EncoderModel, x: np.ndarray):
    """Forward pass on a batch. x: [B, 14, 16]. Returns (z [B, 64], cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    _check_finite("encoder input", x)
    for i, l in enumerate(model.layers):
        _check_finite(f"encoder layer {i}", l.w, l.b)
    w0, w1, w2 = model.layers

    if model.family == DENSE_A:
        flat = x.reshape(x.shape[0], BLOCK_INPUT_DIM)
        pre0 = flat @ w0.w.T + w0.b
        act0 = np.maximum(pre0, 0.0)
    elif model.family == SHARED_B:
        pre0 = np.einsum("bki,oi->bko", x, w0.w) + w0.b
        act0 = np.maximum(pre0, 0.0).reshape(x.shape[0], -1)
    else:
        raise ValueError(f"unknown encoder family {model.family!r}")

    pre1 = act0 @ w1.w.T + w1.b
    act1 = np.maximum(pre1, 0.0)
    pre2 = act1 @ w2.w.T + w2.b
    z = np.tanh(pre2)
    cache = {"x": x, "pre0": pre0, "act0": act0, "pre1": pre1, "act1": act1, "z": z}
    return z, cache


def encoder_backward(model: EncoderModel, cache, dz: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. encoder parameters, given dL/dz."""
    w0, w1, w2 = model.layers
    z = cache["z"]
    dpre2 = dz * (1.0 - z * z)
    grads = {"w2": dpre2.T @ cache["act1"], "b2": dpre2.sum(axis=0)}
    dact1 = dpre2 @ w2.w
    dpre1 = dact1 * (cache["pre1"] > 0)
    grads["w1"] = dpre1.T @ cache["act0"]
    grads["b1"] = dpre1.sum(axis=0)
    dact0 = dpre1 @ w1.w

    if model.family == DENSE_A:
        dpre0 = dact0 * (cache["pre0"] > 0)
        grads["w0"] = dpre0.T @ cache["x"].reshape(-1, BLOCK_INPUT_DIM)
        grads["b0"] = dpre0.sum(axis=0)
    else:
        h0 = w0.w.shape[0]
        dact0 = dact0.reshape(-1, BLOCK_SUBBANDS, h0)
        dpre0 = dact0 * (cache["pre0"] > 0)
        grads["w0"] = np.einsum("bko,bki->oi", dpre0, cache["x"])
        grads["b0"] = dpre0.sum(axis=(0, 1))
    return grads


def _id_scalar(encoder_id) -> np.ndarray:
    """Encoder index as the single extra decoder input, scaled to [-0.5, 0.5]."""
    ids = np.asarray(encoder_id, dtype=np.float64)
    if np.any(ids < 0) or np.any(ids > ENCODER_ID_MAX):
        raise ValueError("encoder_id out of 0..15")
    return (ids - ENCODER_ID_MAX / 2.0) / ENCODER_ID_MAX


_ZERO_ROW_FALLBACK_NORM = 1e-30


def decoder_forward(model: DecoderModel, z: np.ndarray, encoder_id=None):
    """Forward pass. z: [B, 64]; encoder_id required iff model.id_dims == 1.

    Returns (y [B, 14, 16] with unit-norm sub-band rows, cache).
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[None]
    _check_finite("decoder input", z)
    for i, l in enumerate(model.layers):
        _check_finite(f"decoder layer {i}", l.w, l.b)
    if model.id_dims == 0:
        if encoder_id is not None:
            raise ValueError("dedicated decoder takes no encoder_id")
        inp = z
    else:
        if encoder_id is None:
            raise ValueError("common decoder requires an encoder_id")
        ids = np.broadcast_to(_id_scalar(encoder_id), (z.shape[0],))
        inp = np.concatenate([z, ids[:, None]], axis=1)

    w0, w1, w2 = model.layers
    pre0 = inp @ w0.w.T + w0.b
    act0 = np.maximum(pre0, 0.0)
    pre1 = act0 @ w1.w.T + w1.b
    act1 = np.maximum(pre1, 0.0)
    raw = (act1 @ w2.w.T + w2.b).reshape(-1, BLOCK_SUBBANDS, 2 * N_TX)

    norms = np.sqrt(np.sum(raw * raw, axis=2))
    degenerate = norms < _ZERO_ROW_FALLBACK_NORM
    safe = np.where(degenerate, 1.0, norms)
    y = raw / safe[:, :, None]
    if np.any(degenerate):
        fallback = np.zeros(2 * N_TX)
        fallback[0] = 1.0
        y[degenerate] = fallback
    cache = {"inp": inp, "pre0": pre0, "act0": act0, "pre1": pre1, "act1": act1,
             "raw": raw, "norms": safe, "degenerate": degenerate, "y": y}
    return y, cache


def decoder_backward(model: DecoderModel, cache, dy: np.ndarray):
    """Gradients w.r.t. decoder parameters and input latent, given dL/dy."""
    w0, w1, w2 = model.layers
    y, norms = cache["y"], cache["norms"]
    # y = raw / |raw|: draw = (dy - y * <y, dy>) / |raw|; zero on fallback rows.
    inner = np.sum(y * dy, axis=2, keepdims=True)
    draw = (dy - y * inner) / norms[:, :, None]
    draw[cache["degenerate"]] = 0.0
    draw = draw.reshape(-1, BLOCK_INPUT_DIM)

    grads = {"w2": draw.T @ cache["act1"], "b2": draw.sum(axis=0)}
    dact1 = draw @ w2.w
    dpre1 = dact1 * (cache["pre1"] > 0)
    grads["w1"] = dpre1.T @ cache["act0"]
    grads["b1"] = dpre1.sum(axis=0)
    dact0 = dpre1 @ w1.w
    dpre0 = dact0 * (cache["pre0"] > 0)
    grads["w0"] = dpre0.T @ cache["inp"]
    grads["b0"] = dpre0.sum(axis=0)
    dinp = dpre0 @ w0.w
    dz = dinp[:, :LATENT_DIM] if model.id_dims else dinp
    return grads, dz


def encode(model: EncoderModel, sample: BlockSample) -> LatentBlock:
    """Compress one block sample to its continuous latent."""
    sample.validate()
    z, _ = encoder_forward(model, sample.x[None])
    return LatentBlock(z[0])


def decode(model: DecoderModel, latent: LatentBlock, encoder_id: int | None = None) -> BlockSample:
    """Reconstruct a block sample from a (dequantized) latent."""
    y, _ = decoder_forward(model, latent.z[None], None if encoder_id is None else encoder_id)
    return BlockSample(y[0], 0)


# ---------------------------------------------------------------------------
# SGCS loss on blocks


def _complex_parts(rows: np.ndarray):
    """View [..., 16] interleaved rows as (re [..., 8], im [..., 8])."""
    shaped = rows.reshape(*rows.shape[:-1], N_TX, 2)
    return shaped[..., 0], shaped[..., 1]


def sgcs_blocks(target: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Per-row SGCS for [..., 14, 16] stacks of blocks: returns [..., 14]."""
    t_re, t_im = _complex_parts(np.asarray(target, dtype=np.float64))
    y_re, y_im = _complex_parts(np.asarray(out, dtype=np.float64))
    nt = np.sum(t_re ** 2 + t_im ** 2, axis=-1)
    ny = np.sum(y_re ** 2 + y_im ** 2, axis=-1)
    if np.any(nt == 0) or np.any(ny == 0):
        raise ValueError("zero sub-band row")
    c_re = np.sum(t_re * y_re + t_im * y_im, axis=-1)
    c_im = np.sum(t_re * y_im - t_im * y_re, axis=-1)
    return (c_re ** 2 + c_im ** 2) / (nt * ny)


def block_loss(sample: BlockSample, sample_hat: BlockSample) -> float:
    """1 - mean sub-band SGCS between two blocks; range [0, 1]."""
    if sample.x.shape != sample_hat.x.shape:
        raise ValueError("shape mismatch")
    return float(1.0 - np.mean(sgcs_blocks(sample.x, sample_hat.x)))


def block_loss_and_grad(target: np.ndarray, out: np.ndarray):
    """Mean block loss over a batch and its gradient w.r.t. `out`.

    target, out: [B, 14, 16]. Returns (loss, dloss/dout of the same shape).
    """
    target = np.asarray(target, dtype=np.float64)
    out = np.asarray(out, dtype=np.float64)
    t_re, t_im = _complex_parts(target)
    y_re, y_im = _complex_parts(out)
    nt = np.sum(t_re ** 2 + t_im ** 2, axis=-1)
    ny = np.sum(y_re ** 2 + y_im ** 2, axis=-1)
    if np.any(nt == 0) or np.any(ny == 0):
        raise ValueError("zero sub-band row")
    c_re = np.sum(t_re * y_re + t_im * y_im, axis=-1)
    c_im = np.sum(t_re * y_im - t_im * y_re, axis=-1)
    s = c_re ** 2 + c_im ** 2
    denom = nt * ny
    loss = 1.0 - np.mean(s / denom)

    b = target.shape[0]
    scale = -1.0 / (b * BLOCK_SUBBANDS)
    ds_re = 2.0 * (c_re[..., None] * t_re - c_im[..., None] * t_im)
    ds_im = 2.0 * (c_re[..., None] * t_im + c_im[..., None] * t_re)
    common = (s / (denom * ny))[..., None]
    dy_re = scale * (ds_re / denom[..., None] - 2.0 * common * y_re)
    dy_im = scale * (ds_im / denom[..., None] - 2.0 * common * y_im)
    grad = np.empty_like(out).reshape(b, BLOCK_SUBBANDS, N_TX, 2)
    grad[..., 0] = dy_re
    grad[..., 1] = dy_im
    return float(loss), grad.reshape(out.shape)


# ---------------------------------------------------------------------------
# Straight-through quantizer and Adam


def ste_dequantize(z: np.ndarray, cb: QuantCodebook,
                   telemetry: QuantTelemetry | None = None):
    """Quantize+dequantize with the straight-through gradient gate.

    Returns (values at codebook levels, gate mask: 1 inside the clamp
    domain, 0 outside).
    """
    idx = quantize_array(z, cb, telemetry)
    gate = ((z >= cb.lo) & (z <= cb.hi)).astype(np.float64)
    return dequantize_array(idx, cb), gate


class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray], lr: float):
    """One bias-corrected Adam update, in place on the parameter arrays."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)


def train_step(encoder: EncoderModel, decoder: DecoderModel, cb: QuantCodebook,
               batch: np.ndarray, opt: AdamState, lr: float = 1e-3,
               encoder_id=None, telemetry: QuantTelemetry | None = None) -> float:
    """One joint autoencoder update through the quantizer (straight-through).

    batch: [B, 14, 16] targets (the input equals the target). Mutates the
    models and optimizer state; returns the mean block loss.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[0] == 0:
        raise ValueError("batch must be a non-empty [B, 14, 16] array")
    z, enc_cache = encoder_forward(encoder, batch)
    zq, gate = ste_dequantize(z, cb, telemetry)
    y, dec_cache = decoder_forward(decoder, zq, encoder_id)
    loss, dy = block_loss_and_grad(batch, y)
    if not np.isfinite(loss):
        raise FloatingPointError("training loss diverged")
    dec_grads, dzq = decoder_backward(decoder, dec_cache, dy)
    enc_grads = encoder_backward(encoder, enc_cache, dzq * gate)

    params = {f"enc.{k}": v for k, v in model_params(encoder).items()}
    params.update({f"dec.{k}": v for k, v in model_params(decoder).items()})
    grads = {f"enc.{k}": v for k, v in enc_grads.items()}
    grads.update({f"dec.{k}": v for k, v in dec_grads.items()})
    adam_step(opt, params, grads, lr)
    return loss


def decoder_train_step(decoder: DecoderModel, latents: np.ndarray,
                       targets: np.ndarray, opt: AdamState, lr: float = 1e-3,
                       encoder_ids=None) -> float:
    """One decoder-only update on (dequantized latent -> target block) pairs."""
    if latents.shape[0] == 0:
        raise ValueError("empty batch")
    y, cache = decoder_forward(decoder, latents, encoder_ids)
    loss, dy = block_loss_and_grad(targets, y)
    if not np.isfinite(loss):
        raise FloatingPointError("training loss diverged")
    grads, _ = decoder_backward(decoder, cache, dy)
    adam_step(opt, {f"dec.{k}": v for k, v in model_params(decoder).items()},
              {f"dec.{k}": v for k, v in grads.items()}, lr)
    return loss


# ---------------------------------------------------------------------------
# Per-dimension classification loss against target quantizer indices
# (used by the decoder-first training direction)


def index_ce_loss_and_grad(z: np.ndarray, target_idx: np.ndarray, cb: QuantCodebook):
    """Mean 4-way cross entropy per latent dimension and dL/dz.

    Class scores come from the (negative squared) distance between the
    latent value and each codebook level, with the half-cell width as the
    softness scale.
    """
    z = np.asarray(z, dtype=np.float64)
    levels = np.asarray(cb.levels, dtype=np.float64)
    sigma = 0.5 * float(np.min(np.diff(levels)))
    diff = z[..., None] - levels  # [B, 64, n_levels]
    logits = -(diff ** 2) / (2.0 * sigma * sigma)
    logits -= logits.max(axis=-1, keepdims=True)
    expd = np.exp(logits)
    probs = expd / expd.sum(axis=-1, keepdims=True)

    n = z.size
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, np.asarray(target_idx)[..., None], 1.0, axis=-1)
    loss = float(-np.sum(onehot * np.log(np.maximum(probs, 1e-300))) / n)
    dlogits = (probs - onehot) / n
    dz = np.sum(dlogits * (-diff / (sigma * sigma)), axis=-1)
    return loss, dz


def encoder_ce_train_step(encoder: EncoderModel, batch: np.ndarray,
                          target_idx: np.ndarray, cb: QuantCodebook,
                          opt: AdamState, lr: float = 1e-3) -> float:
    """One encoder-only update toward matching target quantizer indices."""
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    z, cache = encoder_forward(encoder, batch)
    loss, dz = index_ce_loss_and_grad(z, target_idx, cb)
    if not np.isfinite(loss):
        raise FloatingPointError("training loss diverged")
    grads = encoder_backward(encoder, cache, dz)
    adam_step(opt, {f"enc.{k}": v for k, v in model_params(encoder).items()},
              {f"enc.{k}": v for k, v in grads.items()}, lr)
    return loss


# ---------------------------------------------------------------------------
# Model and codebook files ("CSMW" / "CSQC", little-endian)


def save_model(path, model):
    """Write an encoder or decoder to the CSMW format (f32 weights)."""
    if isinstance(model, EncoderModel):
        family, encoder_id, id_dims = _FAMILY_CODES[model.family], model.encoder_id, 0
    elif isinstance(model, DecoderModel):
        family, encoder_id, id_dims = _FAMILY_CODES["decoder"], 0, model.id_dims
    else:
        raise TypeError(f"not a model: {type(model)}")
    with open(path, "wb") as f:
        f.write(struct.pack("<4sHBBBB", MODEL_FILE_MAGIC, MODEL_FILE_VERSION,
                            family, encoder_id, id_dims, len(model.layers)))
        for l in model.layers:
            f.write(struct.pack("<II", l.w.shape[0], l.w.shape[1]))
        for l in model.layers:
            f.write(l.w.astype("<f4").tobytes())
            f.write(l.b.astype("<f4").tobytes())


def load_model(path):
    with open(path, "rb") as f:
        head = f.read(struct.calcsize("<4sHBBBB"))
        magic, version, family, encoder_id, id_dims, n_layers = struct.unpack("<4sHBBBB", head)
        if magic != MODEL_FILE_MAGIC:
            raise ValueError(f"bad model magic {magic!r}")
        if version != MODEL_FILE_VERSION:
            raise ValueError(f"unsupported model version {version}")
        dims = [struct.unpack("<II", f.read(8)) for _ in range(n_layers)]
        layers = []
        for rows, cols in dims:
            w = np.frombuffer(f.read(rows * cols * 4), dtype="<f4").astype(np.float64)
            b = np.frombuffer(f.read(rows * 4), dtype="<f4").astype(np.float64)
            if w.size != rows * cols or b.size != rows:
                raise ValueError("model file truncated")
            layers.append(Affine(w.reshape(rows, cols), b))
    name = _FAMILY_NAMES.get(family)
    if name is None:
        raise ValueError(f"unknown family code {family}")
    if name == "decoder":
        return DecoderModel(id_dims, layers)
    return EncoderModel(name, encoder_id, layers)


def save_codebook(path, cb: QuantCodebook):
    cb.validate()
    with open(path, "wb") as f:
        f.write(struct.pack("<4sHH", CODEBOOK_FILE_MAGIC, CODEBOOK_FILE_VERSION,
                            len(cb.levels)))
        f.write(np.asarray(cb.edges, dtype="<f4").tobytes())
        f.write(np.asarray(cb.levels, dtype="<f4").tobytes())


def load_codebook(path) -> QuantCodebook:
    with open(path, "rb") as f:
        magic, version, n_levels = struct.unpack("<4sHH", f.read(8))
        if magic != CODEBOOK_FILE_MAGIC:
            raise ValueError(f"bad codebook magic {magic!r}")
        if version != CODEBOOK_FILE_VERSION:
            raise ValueError(f"unsupported codebook version {version}")
        edges = np.frombuffer(f.read((n_levels - 1) * 4), dtype="<f4").astype(np.float64)
        levels = np.frombuffer(f.read(n_levels * 4), dtype="<f4").astype(np.float64)
    cb = QuantCodebook(levels=levels, edges=edges)
    cb.validate()
    return cb


def codebooks_equal(a: QuantCodebook, b: QuantCodebook) -> bool:
    return (np.array_equal(a.levels, b.levels) and np.array_equal(a.edges, b.edges)
            and a.lo == b.lo and a.hi == b.hi)

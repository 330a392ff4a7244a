"""Conversions between precoder reports and the codec's block samples.

One report at rank L yields L*5 block samples (layer-major, then block),
each covering 14 sub-bands with interleaved (re, im) antenna pairs. The
per-realization batching here is shared by the offline evaluator and the
link emulator so both produce bit-identical numbers.
"""

from __future__ import annotations

import numpy as np

from .channel import ChannelRealization
from .constants import BLOCKS_PER_LAYER, BLOCK_SUBBANDS, N_SUBBANDS, N_TX
from .precoding import PrecoderReport, extract_precoders


def complex_to_rows(v: np.ndarray) -> np.ndarray:
    """[..., 8] complex -> [..., 16] reals with interleaved (re, im)."""
    out = np.empty(v.shape[:-1] + (2 * N_TX,), dtype=np.float64)
    out.reshape(*v.shape[:-1], N_TX, 2)[..., 0] = v.real
    out.reshape(*v.shape[:-1], N_TX, 2)[..., 1] = v.imag
    return out


def rows_to_complex(x: np.ndarray) -> np.ndarray:
    """[..., 16] interleaved reals -> [..., 8] complex."""
    shaped = np.asarray(x, dtype=np.float64).reshape(*x.shape[:-1], N_TX, 2)
    return shaped[..., 0] + 1j * shaped[..., 1]


def report_to_blocks(report: PrecoderReport):
    """Split a report into block samples.

    Returns (x [n_layers*5, 14, 16], layer_idx [n_layers*5]) in layer-major,
    block-minor order.
    """
    n_layers = report.n_layers
    v = report.v.reshape(n_layers, BLOCKS_PER_LAYER, BLOCK_SUBBANDS, N_TX)
    x = complex_to_rows(v).reshape(n_layers * BLOCKS_PER_LAYER, BLOCK_SUBBANDS, 2 * N_TX)
    layer_idx = np.repeat(np.arange(n_layers), BLOCKS_PER_LAYER)
    return x, layer_idx


def blocks_to_vectors(y: np.ndarray, n_layers: int) -> np.ndarray:
    """Reassemble decoded blocks [n_layers*5, 14, 16] into [n_layers, 70, 8]."""
    v = rows_to_complex(y).reshape(n_layers, BLOCKS_PER_LAYER, BLOCK_SUBBANDS, N_TX)
    return v.reshape(n_layers, N_SUBBANDS, N_TX)


def extract_block_dataset(channels: list[ChannelRealization], n_layers: int = 4):
    """Block samples for a whole channel dataset.

    Returns (x [N, 14, 16], layer_idx [N], realization_ids [N]) with
    N = len(channels) * n_layers * 5, realization-major order.
    """
    xs, layers, rids = [], [], []
    for ch in channels:
        report = extract_precoders(ch, n_layers)
        x, li = report_to_blocks(report)
        xs.append(x)
        layers.append(li)
        rids.append(np.full(li.shape, ch.realization_id, dtype=np.int64))
    return np.concatenate(xs), np.concatenate(layers), np.concatenate(rids)

import numpy as np
import pytest

from csilab.codec import decoder_forward, encoder_forward


def unit_blocks(rng, n):
    """Random [n, 14, 16] batch with unit-norm sub-band rows."""
    raw = rng.standard_normal((n, 14, 16))
    return raw / np.sqrt((raw ** 2).sum(axis=2, keepdims=True))


def relu_margin(enc, dec, x, decode_ids=None):
    """Smallest |pre-activation| across both models for input x."""
    z, ec = encoder_forward(enc, x)
    _, dc = decoder_forward(dec, z, decode_ids)
    return min(np.abs(ec["pre0"]).min(), np.abs(ec["pre1"]).min(),
               np.abs(dc["pre0"]).min(), np.abs(dc["pre1"]).min())


def margin_batch(enc, dec, seed, n=3, margin=2e-3, tries=200, decode_ids=None):
    """Batch whose pre-activations stay clear of ReLU kinks, so central
    finite differences with eps=1e-4 never straddle a non-smooth point."""
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        x = unit_blocks(rng, n)
        tgt = unit_blocks(rng, n)
        ids = None if decode_ids is None else np.full(n, decode_ids)
        if relu_margin(enc, dec, x, ids) > margin:
            return x, tgt
    raise RuntimeError("no kink-free batch found")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

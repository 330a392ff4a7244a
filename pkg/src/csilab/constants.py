"""Fixed link dimensioning shared by every module.

The feedback link compresses per-layer eigenvector precoders for 70
effective sub-bands (68 physical, last two duplicated) over an 8-antenna
transmit array, processed in 5 blocks of 14 sub-bands per layer.
"""

N_TX = 8
N_RX = 4
N_SUBBANDS = 70
N_PHYSICAL_SUBBANDS = 68
N_LAYERS_MAX = 4

BLOCK_SUBBANDS = 14
BLOCKS_PER_LAYER = N_SUBBANDS // BLOCK_SUBBANDS  # 5

LATENT_DIM = 64
BITS_PER_LATENT_DIM = 2
BLOCK_PAYLOAD_BITS = LATENT_DIM * BITS_PER_LATENT_DIM  # 128

INPUT_BITS_PER_VALUE = 16
BLOCK_INPUT_DIM = BLOCK_SUBBANDS * N_TX * 2  # 224 reals per block sample

# Full-report accounting at rank 4.
REPORT_INPUT_BITS = N_TX * N_SUBBANDS * 2 * INPUT_BITS_PER_VALUE * N_LAYERS_MAX
REPORT_PAYLOAD_BITS = N_LAYERS_MAX * BLOCKS_PER_LAYER * BLOCK_PAYLOAD_BITS
COMPRESSION_RATIO = REPORT_INPUT_BITS // REPORT_PAYLOAD_BITS
ENCODER_CALLS_PER_REPORT = N_LAYERS_MAX * BLOCKS_PER_LAYER


def check_bit_budget():
    """Verify the dimensioning identities; raises if a constant was edited."""
    if REPORT_INPUT_BITS != 71680:
        raise AssertionError(f"input bits {REPORT_INPUT_BITS} != 71680")
    if REPORT_PAYLOAD_BITS != 2560:
        raise AssertionError(f"payload bits {REPORT_PAYLOAD_BITS} != 2560")
    if COMPRESSION_RATIO != 28 or REPORT_INPUT_BITS != 28 * REPORT_PAYLOAD_BITS:
        raise AssertionError(f"compression ratio {COMPRESSION_RATIO} != 28")
    if ENCODER_CALLS_PER_REPORT != 20:
        raise AssertionError(f"encoder calls {ENCODER_CALLS_PER_REPORT} != 20")
    if BLOCKS_PER_LAYER * BLOCK_SUBBANDS != N_SUBBANDS:
        raise AssertionError("sub-bands not divisible into 14-sub-band blocks")


check_bit_budget()

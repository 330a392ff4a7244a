"""csilab: link-level lab for interoperable ML-based CSI feedback compression."""

from . import constants
from .channel import (ChannelRealization, ScenarioConfig, generate_channel,
                      generate_dataset, scenario_preset)
from .precoding import (DftCodebook, PrecoderReport, closed_loop_capacity,
                        extract_precoders, hermitian_eig, make_dft_codebook,
                        mean_sgcs, reorthogonalize, sgcs, type1_baseline)

constants.check_bit_budget()

__all__ = [
    "constants",
    "ChannelRealization", "ScenarioConfig", "generate_channel",
    "generate_dataset", "scenario_preset",
    "DftCodebook", "PrecoderReport", "closed_loop_capacity",
    "extract_precoders", "hermitian_eig", "make_dft_codebook",
    "mean_sgcs", "reorthogonalize", "sgcs", "type1_baseline",
]

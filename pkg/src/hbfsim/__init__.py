"""Hybrid analog-digital beamforming with dynamic subarrays for MIMO-OFDM downlinks."""

from .analog import AnalogBeamformer, beam_align_los, conj_phase_match
from .channel import (ChannelSet, PathSet, SystemConfig, array_response, generate_channel,
                      path_loss, perturb_channel, sample_paths, synthesize_channel)
from .digital import (DigitalBeamformer, EquivalentChannel, ParamSet, WmmseState,
                      equivalent_channel, mu_bisection, param_ascent, param_beamformer,
                      wmmse, wmmse_to_params, zf)
from .metrics import PowerModel, energy_efficiency, evaluate, ncpe, sinr, spectral_efficiency
from .selection import (SelectionMatrix, compose, coordinate_ascent_select, exhaustive_select,
                        fixed_pattern, gain_greedy_select, random_selection)

__version__ = "0.1.0"

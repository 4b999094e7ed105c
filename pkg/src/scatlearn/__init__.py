"""Differentiable 2D wavelet scattering with learnable Morlet filterbanks."""

from .autograd import (GradientSet, conv_backward, modulus_backward, param_chain,
                       scattering_backward)
from .filterbank import (EquivariantParams, FilterBank, FilterbankSpec,
                         build_lowpass, equivariant_expand, littlewood_paley,
                         load_bank, random_init, save_bank, tight_frame_init)
from .morlet import (DegenerateEnvelope, GridSpec, MorletParams, gabor_param_grads,
                     gabor_sample, morlet_beta, morlet_param_grads, morlet_sample)
from .scattering import (ScatteringOutput, ShapeMismatch, Tape, conv_fft, forward,
                         scatter0, scatter1, scatter2)

__version__ = "0.1.0"

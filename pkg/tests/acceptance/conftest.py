from dataclasses import dataclass

import pytest

from core.block_mode import BlockMode
from msfa.evaluation import DesignSpec, bandpass_msfa
from msfa.mosaic import build_phi, expand_nine
from msfa.optimizer import OptimConfig, OptimTrace, build_training_set, optimize
from msfa.spectral_core import BlockShape, MsfaBlock, SpectralCube
from msfa.stats import empirical_autocorr, markov_autocorr
from msfa.synthetic import synth_hne, uniform_grid
from msfa.wiener import DemosaicMatrix, wiener_matrix

"""
Shared experiment for the synthetic-data acceptance checks: one MSFA trained on a few
H&E phantoms, its one-block counterpart and the bandpass + Markov stand-in, plus held-out
phantoms drawn from the same generator.
"""

# 5 x 40 x 40 blocks = 8000 training neighborhoods, far more than the 9N = 144 mosaic
# samples each center estimate is regressed on
IMAGE_SIZE = 160
BANDS = 16
TRAIN_SEEDS = (101, 102, 103, 104, 105)
HELD_OUT_SEEDS = (201, 202, 203, 204, 205)
MARKOV_RHO = (0.95, 0.95)


@dataclass(frozen=True)
class TrainedExperiment:
    training: list[SpectralCube]
    held_out: list[SpectralCube]
    msfa: MsfaBlock
    nine_block: DesignSpec
    one_block: DesignSpec
    bandpass_markov: DesignSpec
    trace: OptimTrace


@pytest.fixture(scope="session")
def experiment() -> TrainedExperiment:
    wavelengths = uniform_grid(420.0, 720.0, BANDS)
    block = BlockShape(4, 4)
    training = [synth_hne(IMAGE_SIZE, IMAGE_SIZE, wavelengths, s) for s in TRAIN_SEEDS]
    held_out = [synth_hne(IMAGE_SIZE, IMAGE_SIZE, wavelengths, s) for s in HELD_OUT_SEEDS]

    cfg = OptimConfig(outer_iters=40, inner_max_iters=100, seed=0)
    msfa, w_nine, trace = optimize(build_training_set(training, block), None, cfg)

    r_one = empirical_autocorr(training, block, BlockMode.ONE_BLOCK)
    w_one = wiener_matrix(r_one, build_phi(msfa))

    bandpass = bandpass_msfa(wavelengths, block)
    r_markov = markov_autocorr(block, BANDS, BlockMode.NINE_BLOCK, *MARKOV_RHO)
    w_markov: DemosaicMatrix = wiener_matrix(r_markov, expand_nine(build_phi(bandpass)))

    return TrainedExperiment(
        training=training,
        held_out=held_out,
        msfa=msfa,
        nine_block=DesignSpec("proposed-9block", msfa, w_nine),
        one_block=DesignSpec("proposed-1block", msfa, w_one),
        bandpass_markov=DesignSpec("bandpass-markov", bandpass, w_markov),
        trace=trace,
    )

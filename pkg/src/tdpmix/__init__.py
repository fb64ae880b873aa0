"""Joint alignment and clustering with a transformed DP mixture."""

from .ba import BAState, ba_objective, ba_sweep, init_ba, optimize_rho, run_ba
from .data import (
    Dataset,
    checkpoint_load,
    checkpoint_save,
    load_dataset,
    synth_curves,
    synth_images,
    synth_points2d,
)
from .expfam import BernoulliStats, DiagGaussianStats, TransformPriorStats
from .hyper import Hyperparams
from .jac import (
    JACState,
    crp_log_prior,
    gibbs_iteration,
    init_jac,
    resample_gamma,
    run_jac,
    sampler1_step,
    sampler2_step,
    seed_clusters,
)
from .metrics import alignment_score, mean_pixel_entropy, rand_index, stddev_score
from .transforms import make_family

__version__ = "0.1.0"

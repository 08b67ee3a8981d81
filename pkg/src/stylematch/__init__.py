"""Desk-scale score-distillation stylization with spectrum regularization.

Core pieces: a linear-beta diffusion schedule with eps/x0/score conversions
(`schedule`), exact Gaussian-mixture score oracles (`oracles`), small
conditional eps-prediction networks (`denoiser`), the DCT low-pass loss and
RAPSD analysis (`spectrum`), conditioning-difference relevance maps
(`relevance`), the single-image optimization loop (`stylize`), one-step
generator distillation (`generator`), procedural paired corpora (`corpus`),
a self-contained verification suite (`verify`), and the CLI (`cli`).
"""

from .errors import (
    NumericGuardError,
    ParameterError,
    ShapeError,
    StyleMatchError,
    TrainingDivergedError,
)
from .rng import make_rng, split_rng
from .schedule import NoiseSchedule, add_noise, eps_to_score, eps_to_x0, make_schedule
from .oracles import (
    GaussianMixture,
    fit_isotropic_gaussian,
    gaussian_kl,
    gaussian_kl_moments,
    noised_marginal_score,
    optimal_eps,
    reference_kl_gradient,
    single_gaussian,
)
from .spectrum import (
    RapsdCurve,
    SpectrumMask,
    band_power,
    dct2,
    dct_band_rel_l2,
    freq_loss,
    high_band_power,
    idct2,
    lpf_mask,
    mean_rapsd,
    rapsd,
    thld_of_t,
)
from .denoiser import (
    ArchSpec,
    Condition,
    Denoiser,
    TrainConfig,
    copy_denoiser,
    denoise_loss,
    fake_update_step,
    load_denoiser,
    save_denoiser,
    train_denoiser,
)
from .relevance import RelevanceMap, apply_refinement, minmax_norm, relevance_map
from .stylize import (
    IdentityCodec,
    Networks,
    OptimState,
    SmsConfig,
    optimize_image,
    sample_timestep,
    sms_image_step,
    style_matching_residual,
    weight_w,
    write_trajectory_csv,
)
from .generator import (
    BatchPlan,
    DistillConfig,
    GenArch,
    Generator,
    load_generator,
    make_batch_plan,
    recon_warmup,
    save_generator,
    stylize_once,
    train_generator,
)
from .corpus import (
    CorpusSpec,
    ImageRecord,
    conditioning_dataset,
    gen_corpus,
    gen_real,
    stylize_reference,
    write_corpus,
)
from .imgio import load_png, load_raw, save_gray_png, save_png, save_raw

__version__ = "0.1.0"

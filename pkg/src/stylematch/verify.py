"""Self-contained oracle verification suite.

Everything here runs from scratch in seconds and requires no prior training
run: exact-transform checks, the Gaussian KL-descent check of the update rule
(including a deliberately sign-flipped negative control), mode-seeking on a
two-component mixture against a learned fake network, and finite-difference
gradient checks. The CLI `verify` verb emits the result as a JSON report; the
acceptance tests call the same functions.
"""

from __future__ import annotations

import time

import numpy as np
import torch

from .denoiser import ArchSpec, Condition, Denoiser, cond_index
from .nets import get_flat_grads, get_flat_params, set_flat_params
from .oracles import (
    GaussianMixture,
    fit_isotropic_gaussian,
    gaussian_kl_moments,
    log_density,
    noised_marginal_score,
    optimal_eps,
    reference_kl_gradient,
    single_gaussian,
)
from .rng import make_rng
from .schedule import NoiseSchedule, make_schedule
from .spectrum import dct2, freq_loss, idct2
from .stylize import Networks, SmsConfig, optimize_image


class OracleEps:
    """Analytic eps-predictor over (N, d) point clouds; ignores conditioning."""

    def __init__(self, gmm: GaussianMixture, sched: NoiseSchedule):
        self.gmm = gmm
        self.sched = sched

    def predict(self, z_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        return optimal_eps(self.gmm, np.asarray(z_t, dtype=np.float64), t, self.sched)


class MomentFitFake:
    """Oracle stand-in for the online fake network: an isotropic Gaussian
    refit to the current point cloud after every update (the exact limit of
    'train the fake on generated outputs')."""

    def __init__(self, init_mean, init_var: float, sched: NoiseSchedule):
        self.gmm = single_gaussian(init_mean, init_var)
        self.sched = sched

    def predict(self, z_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        return optimal_eps(self.gmm, np.asarray(z_t, dtype=np.float64), t, self.sched)

    def update_on(self, z0: np.ndarray, rng, cond) -> None:
        mean, var = fit_isotropic_gaussian(np.asarray(z0, dtype=np.float64))
        self.gmm = single_gaussian(mean, var)


def mc_expected_gradient(
    z0: np.ndarray,
    style: GaussianMixture,
    fake: GaussianMixture,
    sched: NoiseSchedule,
    t_min: int,
    t_max: int,
    n_draws: int,
    rng: np.random.Generator,
    w: float = 1.0,
) -> np.ndarray:
    """Monte-Carlo E_{t,eps}[w (eps*_style - eps*_fake)] with t stratified one
    draw per decile of [t_min, t_max] to reduce variance."""
    z0 = np.asarray(z0, dtype=np.float64)
    edges = np.linspace(t_min, t_max + 1, 11)
    acc = np.zeros_like(z0)
    for i in range(n_draws):
        d = i % 10
        lo = int(np.floor(edges[d]))
        hi = max(lo, int(np.floor(edges[d + 1])) - 1)
        t = int(rng.integers(lo, hi + 1))
        eps = rng.standard_normal(z0.shape)
        acc += reference_kl_gradient(z0, style, fake, t, sched, eps=eps, w=w)
    return acc / n_draws


# ---------------------------------------------------------------- transforms


def check_transforms(seed: int = 0, n_grids: int = 100) -> dict:
    """Round-trip, Parseval, and freq_loss finite-difference gradient checks."""
    t0 = time.time()
    rng = make_rng(seed, 51)
    sched = make_schedule(1000)
    max_rt = 0.0
    max_pars = 0.0
    for _ in range(n_grids):
        x = rng.standard_normal((64, 64, 3))
        c = dct2(x)
        rt = np.linalg.norm(idct2(c) - x) / np.linalg.norm(x)
        pars = abs(np.sum(c * c) - np.sum(x * x)) / np.sum(x * x)
        max_rt = max(max_rt, float(rt))
        max_pars = max(max_pars, float(pars))

    # central finite differences of the masked DCT loss on a small grid
    z_tgt = rng.standard_normal((8, 8, 3))
    z_src = rng.standard_normal((8, 8, 3))
    t = 220
    _, grad = freq_loss(z_tgt, z_src, t, sched, t_ref=500)
    h = 1e-6
    fd = np.zeros_like(grad)
    flat = z_tgt.ravel()
    for i in range(flat.size):
        zp = flat.copy()
        zm = flat.copy()
        zp[i] += h
        zm[i] -= h
        lp, _ = freq_loss(zp.reshape(z_tgt.shape), z_src, t, sched, t_ref=500)
        lm, _ = freq_loss(zm.reshape(z_tgt.shape), z_src, t, sched, t_ref=500)
        fd.ravel()[i] = (lp - lm) / (2 * h)
    grad_err = float(np.linalg.norm(fd - grad) / max(np.linalg.norm(fd), 1e-30))

    passed = max_rt < 1e-9 and max_pars < 1e-9 and grad_err < 1e-6
    return {
        "name": "transform_exactness",
        "passed": bool(passed),
        "roundtrip_rel_err": max_rt,
        "parseval_rel_err": max_pars,
        "freq_grad_rel_err": grad_err,
        "runtime_s": time.time() - t0,
    }


# ---------------------------------------------------------------- KL descent


A2_STYLE_MEAN = 2.0
A2_STYLE_VAR = 0.25


def _kl_to_style(cloud: np.ndarray, style: GaussianMixture) -> float:
    mean, var = fit_isotropic_gaussian(cloud)
    return gaussian_kl_moments(mean, var, style.means[0], float(style.variances[0]))


class _SignFlippedStyle:
    """Negative-control wrapper: predicting 2*eps_fake - eps_style makes the
    residual (style' - fake) equal to -(style - fake), i.e. every update seed
    is exactly negated while the fake refit dynamics stay untouched."""

    def __init__(self, style, fake):
        self.style = style
        self.fake = fake

    def predict(self, z_t, t, cond):
        return 2.0 * self.fake.predict(z_t, t, cond) - self.style.predict(z_t, t, cond)


def check_kl_descent(
    seed: int = 0,
    n_points: int = 1000,
    steps: int = 500,
    step_size: float = 0.05,
    flip_sign: bool = False,
) -> dict:
    """Distribution-matching descent on the 1-D Gaussian pair: style N(2, .25),
    initial cloud N(0, 1), analytic oracles on both sides (the fake side is an
    isotropic moment refit to the moving cloud). The sign-flipped variant must
    fail the >= 90% KL-drop criterion."""
    t0 = time.time()
    sched = make_schedule(1000)
    style = single_gaussian([A2_STYLE_MEAN], A2_STYLE_VAR)
    rng = make_rng(seed, 53)
    cloud0 = rng.standard_normal((n_points, 1))

    style_model = OracleEps(style, sched)
    fake_model = MomentFitFake(*fit_isotropic_gaussian(cloud0), sched)
    style_side = _SignFlippedStyle(style_model, fake_model) if flip_sign else style_model
    nets = Networks(style=style_side, fake=fake_model)

    cfg = SmsConfig(
        lam=0.0,
        iter_total=steps,
        t_min=20,
        t_max=500,
        w_mode="constant",
        step_size=step_size,
        use_relevance=False,
        use_freq=False,
        sampler="uniform_random",
        seed=seed,
        snapshot_every=1,
        clamp_output=False,
    )
    kl0 = _kl_to_style(cloud0, style)
    kl_rows = [(0, kl0)]

    def hook(it, state):
        if np.all(np.isfinite(state.image)):
            kl_rows.append((it, _kl_to_style(state.image, style)))

    cloud_fin, _ = optimize_image(cloud0, cfg, nets, sched, snapshot_hook=hook)
    kl_fin = _kl_to_style(cloud_fin, style)
    drop = 1.0 - kl_fin / kl0
    return {
        "name": "gaussian_kl_descent" + ("_signflip" if flip_sign else ""),
        "passed": bool(drop >= 0.9) if not flip_sign else bool(drop < 0.9),
        "initial_kl": float(kl0),
        "final_kl": float(kl_fin),
        "drop_fraction": float(drop),
        "kl_trajectory": [(int(i), float(k)) for i, k in kl_rows],
        "runtime_s": time.time() - t0,
    }


# --------------------------------------------------------------- mode seeking


def check_mode_seeking(
    seed: int = 0,
    n_points: int = 1000,
    steps: int = 1000,
    step_size: float = 0.05,
    fake_lr: float = 1e-3,
) -> dict:
    """Two-component style mixture in 2-D with a *learned* fake denoiser
    trained online (one update per step on the current cloud): >= 95% of
    points must end within 3 component standard deviations of some mode."""
    t0 = time.time()
    sched = make_schedule(1000)
    var = 0.25
    style = GaussianMixture(
        means=np.array([[-2.0, 0.0], [2.0, 0.0]]),
        variances=np.array([var, var]),
        weights=np.array([0.5, 0.5]),
    )
    rng = make_rng(seed, 59)
    cloud0 = rng.standard_normal((n_points, 2))

    arch = ArchSpec(in_channels=2, width=24, depth=3, emb_dim=32, n_content=1, n_edit=1)
    fake = Denoiser(arch, "fake", seed=seed)
    nets = Networks(style=OracleEps(style, sched), fake=fake)
    cfg = SmsConfig(
        lam=0.0,
        iter_total=steps,
        t_min=20,
        t_max=500,
        w_mode="constant",
        step_size=step_size,
        use_relevance=False,
        use_freq=False,
        sampler="uniform_random",
        seed=seed,
        fake_lr=fake_lr,
        clamp_output=False,
    )
    cloud, _ = optimize_image(cloud0, cfg, nets, sched)
    d = np.sqrt(
        np.min(
            np.sum((cloud[:, None, :] - style.means[None, :, :]) ** 2, axis=2), axis=1
        )
    )
    frac = float(np.mean(d <= 3.0 * np.sqrt(var)))
    return {
        "name": "gmm_mode_seeking",
        "passed": bool(frac >= 0.95),
        "fraction_within_3std": frac,
        "mean_min_distance": float(np.mean(d)),
        "runtime_s": time.time() - t0,
    }


# ------------------------------------------------------------ gradient checks


def fd_param_check(
    arch: ArchSpec, sched: NoiseSchedule, n_probes: int = 10, h: float = 1e-4, seed: int = 0
) -> dict:
    """Central finite differences vs autograd on the denoising loss, in double
    precision, on randomly probed parameters."""
    t0 = time.time()
    rng = make_rng(seed, 61)
    model = Denoiser(arch, "real", seed=seed)
    model.net.double()
    hw = 6
    z0 = rng.standard_normal((hw, hw, arch.in_channels))
    eps = rng.standard_normal(z0.shape)
    t = int(rng.integers(1, sched.T + 1))
    cond = Condition.null()
    a, s = float(sched.alpha[t]), float(sched.sigma[t])
    z_t = a * z0 + s * eps

    def loss_at(flat: np.ndarray) -> float:
        set_flat_params(model.net, flat)
        zb = torch.from_numpy(z_t[None].transpose(0, 3, 1, 2)).to(torch.float64)
        eb = torch.from_numpy(eps[None].transpose(0, 3, 1, 2)).to(torch.float64)
        tb = torch.tensor([t], dtype=torch.long)
        cb = torch.tensor([cond_index(arch, cond)], dtype=torch.long)
        with torch.no_grad():
            pred = model.net(zb, tb, cb)
            return float(torch.mean((pred - eb) ** 2).item())

    flat0 = get_flat_params(model.net)
    # autograd reference
    set_flat_params(model.net, flat0)
    zb = torch.from_numpy(z_t[None].transpose(0, 3, 1, 2)).to(torch.float64)
    eb = torch.from_numpy(eps[None].transpose(0, 3, 1, 2)).to(torch.float64)
    tb = torch.tensor([t], dtype=torch.long)
    cb = torch.tensor([cond_index(arch, cond)], dtype=torch.long)
    model.net.zero_grad()
    loss = torch.mean((model.net(zb, tb, cb) - eb) ** 2)
    loss.backward()
    g = get_flat_grads(model.net)

    idx = rng.choice(flat0.size, size=n_probes, replace=False)
    worst = 0.0
    for i in idx:
        fp = flat0.copy()
        fm = flat0.copy()
        fp[i] += h
        fm[i] -= h
        fd = (loss_at(fp) - loss_at(fm)) / (2 * h)
        denom = max(abs(fd), abs(g[i]), 1e-8)
        worst = max(worst, abs(fd - g[i]) / denom)
    set_flat_params(model.net, flat0)
    return {
        "name": f"denoiser_param_grad_fd_c{arch.in_channels}",
        "passed": bool(worst < 1e-4),
        "worst_rel_err": float(worst),
        "runtime_s": time.time() - t0,
    }


def check_score_oracle(seed: int = 0) -> dict:
    """noised_marginal_score vs central finite differences of log p_t."""
    t0 = time.time()
    sched = make_schedule(1000)
    gm = GaussianMixture(
        means=np.array([[-1.5], [2.0]]),
        variances=np.array([0.3, 0.8]),
        weights=np.array([0.4, 0.6]),
    )
    rng = make_rng(seed, 67)
    worst = 0.0
    h = 1e-6
    for _ in range(20):
        t = int(rng.integers(1, sched.T + 1))
        z = rng.uniform(-4, 4, size=(1,))
        s_an = noised_marginal_score(gm, z, t, sched)
        gm_t = gm.noised(t, sched)
        fd = (log_density(gm_t, z + h) - log_density(gm_t, z - h)) / (2 * h)
        worst = max(worst, float(abs(s_an[0] - fd) / max(abs(fd), 1e-12)))
    return {
        "name": "gmm_score_vs_fd",
        "passed": bool(worst < 1e-5),
        "worst_rel_err": worst,
        "runtime_s": time.time() - t0,
    }


def run_all(seed: int = 0) -> dict:
    """The full oracle suite; no prior training required."""
    checks = [
        check_transforms(seed),
        check_score_oracle(seed),
        fd_param_check(ArchSpec(in_channels=3, width=16, depth=4, n_content=2, n_edit=1),
                       make_schedule(1000), seed=seed),
        fd_param_check(ArchSpec(in_channels=2, width=24, depth=3, n_content=1, n_edit=1),
                       make_schedule(1000), seed=seed),
        check_kl_descent(seed),
        check_kl_descent(seed, flip_sign=True),
        check_mode_seeking(seed),
    ]
    slim = []
    for c in checks:
        c = dict(c)
        c.pop("kl_trajectory", None)
        slim.append(c)
    return {"passed": bool(all(c["passed"] for c in checks)), "checks": slim}

"""Toy-scale adversarial training of the weather generator.

Each step samples a type-balanced batch of paired (clean, degraded) examples
and unpaired held-out-style degraded examples, then updates the realism
critic, the pairing critic and the generator in that order. Critics ascend
their source-adversarial value and descend their type NLL; the generator
descends a non-saturating fool-the-critic term plus its type NLLs. The
written objective forms are evaluated on the detached terms for the log.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from allweather.codes import WEATHER_TYPES, WeatherCode
from allweather.degrade import compose_condition
from allweather.discriminator import clamp_probs
from allweather.errors import DivergenceError, ParameterError
from allweather.gan.networks import (
    ConditionGenerator,
    GeneratorConfig,
    PairingDiscriminator,
    RealismDiscriminator,
)
from allweather.gan.objectives import (
    GANTerms,
    ObjectiveWeights,
    _type_nll,
    objectives,
    pd_losses,
    rd_losses,
)


@dataclass
class GANTrainConfig:
    steps: int = 500
    batch_size: int = 8
    lr: float = 1e-4
    critic_width: int = 32
    seed: int = 0
    log_every: int = 25
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)


def build_gan_training_data(cleans: list[np.ndarray], seed: int):
    """Analytic-operator proxy for per-type GAN training corpora.

    paired[t] holds (clean, degraded) pairs rendered in the paired parameter
    regime; realworld[t] holds unpaired degraded images rendered from *other*
    clean images in the disjoint held-out regime.
    """
    if len(cleans) < 4:
        raise ParameterError("need >= 4 clean images to split paired/realworld data")
    half = len(cleans) // 2
    paired_cleans, real_cleans = cleans[:half], cleans[half:]
    paired: dict[int, list] = {i: [] for i in range(len(WEATHER_TYPES))}
    realworld: dict[int, list] = {i: [] for i in range(len(WEATHER_TYPES))}
    for ti, weather in enumerate(WEATHER_TYPES):
        code = WeatherCode.single(weather)
        for ci, img in enumerate(paired_cleans):
            s = int(np.random.SeedSequence(entropy=seed, spawn_key=(ti, ci, 0)).generate_state(1)[0])
            paired[ti].append((img, compose_condition(img, code, s, regime="paired")))
        for ci, img in enumerate(real_cleans):
            s = int(np.random.SeedSequence(entropy=seed, spawn_key=(ti, ci, 1)).generate_state(1)[0])
            realworld[ti].append(compose_condition(img, code, s, regime="realworld"))
    return paired, realworld


def _to_tensor(images) -> torch.Tensor:
    return torch.from_numpy(
        np.stack([np.ascontiguousarray(im, dtype=np.float32) for im in images])
    ).permute(0, 3, 1, 2)


def train_adversegan(paired, realworld, config: GANTrainConfig):
    """Alternating critic/generator updates over type-balanced batches.

    Returns (generator, realism critic, pairing critic, log rows). Every
    logged step records the six raw terms plus the combined objective values;
    non-finite losses abort with the step index.
    """
    torch.manual_seed(config.seed)
    gen = ConditionGenerator(config.generator)
    rd = RealismDiscriminator(base_width=config.critic_width)
    pd = PairingDiscriminator(base_width=config.critic_width)

    opt_g = torch.optim.Adam(gen.parameters(), lr=config.lr, betas=(0.5, 0.999))
    opt_rd = torch.optim.Adam(rd.parameters(), lr=config.lr, betas=(0.5, 0.999))
    opt_pd = torch.optim.Adam(pd.parameters(), lr=config.lr, betas=(0.5, 0.999))

    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(3,)))
    w = config.weights
    log = []

    for step in range(config.steps):
        types = rng.integers(0, len(WEATHER_TYPES), size=config.batch_size)
        c_list, h_list, e_list = [], [], []
        for ti in types:
            pc, ph = paired[int(ti)][rng.integers(0, len(paired[int(ti)]))]
            c_list.append(pc)
            h_list.append(ph)
            e_list.append(realworld[int(ti)][rng.integers(0, len(realworld[int(ti)]))])
        c = _to_tensor(c_list)
        h = _to_tensor(h_list)
        e = _to_tensor(e_list)
        t = torch.from_numpy(types.astype(np.int64))
        t_hat = t  # proxy data is labelled by construction

        z_c = torch.from_numpy(
            rng.standard_normal((config.batch_size, config.generator.content_dim)).astype(np.float32)
        )
        z_s = torch.from_numpy(
            rng.standard_normal((config.batch_size, config.generator.style_dim)).astype(np.float32)
        )
        d = gen(c, t, z_c, z_s)

        # realism critic: ascend adv, descend its type NLL
        adv_rd, cls_r_rd, _ = rd_losses(e, d.detach(), t, t_hat, rd)
        rd_step_loss = w.alpha * (-adv_rd + w.lambda_cls * cls_r_rd)
        _finite_or_raise(rd_step_loss, step, "realism critic")
        opt_rd.zero_grad()
        rd_step_loss.backward()
        opt_rd.step()

        # pairing critic
        adv_pd, cls_r_pd, _ = pd_losses(c, h, d.detach(), t, t_hat, pd)
        pd_step_loss = w.beta * (-adv_pd + w.lambda_cls * cls_r_pd)
        _finite_or_raise(pd_step_loss, step, "pairing critic")
        opt_pd.zero_grad()
        pd_step_loss.backward()
        opt_pd.step()

        # generator: non-saturating fool terms plus fake-side type NLLs
        fake_rd_src, fake_rd_cls = rd(d)
        fake_pd_src, fake_pd_cls = pd(c, d)
        fool_rd = -clamp_probs(torch.sigmoid(fake_rd_src)).log().mean()
        fool_pd = -clamp_probs(torch.sigmoid(fake_pd_src)).log().mean()
        cls_f_rd = _type_nll(fake_rd_cls, t)
        cls_f_pd = _type_nll(fake_pd_cls, t)
        g_step_loss = w.alpha * (fool_rd + w.lambda_cls * cls_f_rd) + \
            w.beta * (fool_pd + w.lambda_cls * cls_f_pd)
        _finite_or_raise(g_step_loss, step, "generator")
        opt_g.zero_grad()
        g_step_loss.backward()
        opt_g.step()

        if step % config.log_every == 0 or step == config.steps - 1:
            terms = GANTerms(
                adv_rd=float(adv_rd),
                cls_r_rd=float(cls_r_rd),
                cls_f_rd=float(cls_f_rd),
                adv_pd=float(adv_pd),
                cls_r_pd=float(cls_r_pd),
                cls_f_pd=float(cls_f_pd),
            )
            l_g, l_rd, l_pd = objectives(terms, w)
            log.append({"step": step, "L_G": l_g, "L_RD": l_rd, "L_PD": l_pd,
                        **terms.__dict__})

    gen.trained = True
    gen.eval()
    rd.eval()
    pd.eval()
    return gen, rd, pd, log


def _finite_or_raise(loss: torch.Tensor, step: int, who: str) -> None:
    if not torch.isfinite(loss):
        raise DivergenceError(step, f"{who} loss non-finite at step {step}")


def realism_type_accuracy(rd: RealismDiscriminator, images, labels) -> float:
    """Fraction of images whose 5-way type prediction matches the label."""
    rd.eval()
    with torch.no_grad():
        _, cls = rd(_to_tensor(images))
        pred = cls.argmax(dim=1).numpy()
    return float((pred == np.asarray(labels)).mean())

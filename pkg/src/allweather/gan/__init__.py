"""Conditional weather generator with dual latent spaces and two critics."""

from allweather.gan.networks import (
    ConditionGenerator,
    GeneratorConfig,
    PairingDiscriminator,
    RealismDiscriminator,
    load_generator_checkpoint,
    save_generator_checkpoint,
)
from allweather.gan.objectives import ObjectiveWeights, objectives
from allweather.gan.hybrid import gen_hybrid, stage_latents
from allweather.gan.train import GANTrainConfig, train_adversegan

__all__ = [
    "ConditionGenerator",
    "GeneratorConfig",
    "RealismDiscriminator",
    "PairingDiscriminator",
    "ObjectiveWeights",
    "objectives",
    "gen_hybrid",
    "stage_latents",
    "GANTrainConfig",
    "train_adversegan",
    "save_generator_checkpoint",
    "load_generator_checkpoint",
]

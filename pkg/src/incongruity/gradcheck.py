"""Finite-difference gradient verification for all four model families."""

from __future__ import annotations

import numpy as np

from .autograd import finite_difference_check
from .models import ARCHITECTURES, ModelConfig, build_model, nll_loss

TOY_VOCAB = 24


def toy_config(architecture, seed=0):
    """Small dimensions so the full-loss finite-difference sweep stays fast."""
    return ModelConfig(
        architecture=architecture,
        vocab_size=TOY_VOCAB,
        embed_dim=8,
        word_hidden=8,
        para_hidden=4,
        attention_dim=8,
        dropout_rde_cde=0.0,
        dropout_ahde_word=0.0,
        conv_widths=(1, 2),
        conv_filters_per_width=3,
        max_tokens_per_chunk=6,
        max_chunks=3,
        seed=seed,
    )


def toy_instances(seed=0, count=2):
    """Random articles of up to 3 paragraphs x 6 tokens, labels alternating."""
    rng = np.random.default_rng(seed)
    instances = []
    for i in range(count):
        headline = rng.integers(2, TOY_VOCAB, size=rng.integers(2, 6)).tolist()
        chunks = [
            rng.integers(2, TOY_VOCAB, size=rng.integers(2, 7)).tolist()
            for _ in range(rng.integers(1, 4))
        ]
        instances.append((headline, chunks, i % 2))
    return instances


def check_model(architecture, seed=0, eps=1e-5, tol=1e-4):
    """Finite-difference check of every parameter through the full loss."""
    model = build_model(toy_config(architecture, seed))
    instances = toy_instances(seed)

    def build_loss():
        probs = [model.score_instance(h, c) for h, c, _ in instances]
        return nll_loss(probs, [y for _, _, y in instances])

    return finite_difference_check(build_loss, model.parameters(), eps=eps, tol=tol)


def run_gradcheck(seed=0, eps=1e-5, tol=1e-4):
    """Check all four architectures; returns {architecture: report}."""
    return {arch: check_model(arch, seed=seed, eps=eps, tol=tol) for arch in ARCHITECTURES}

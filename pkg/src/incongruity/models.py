"""The four dual-encoder article scorers and the independent-paragraph wrapper.

Every model maps {headline token ids, body chunks} to an incongruence
probability in (0, 1). The headline and body sides share all encoder weights;
only the bilinear scorer compares the two resulting vectors.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .autograd import (
    Tensor,
    clamp,
    load_parameters_into,
    log,
    mean_over_axis,
    save_parameters,
    stack_rows,
)
from .corpus import split_sentence_ids
from .errors import ConfigError, ContractError, EmptyInputError
from .layers import (
    PAD_ID,
    AttentionParams,
    BilinearScorer,
    ConvBank,
    EmbeddingTable,
    GruCell,
    attend,
    bigru_sequence,
    bilinear_score,
    conv_encode,
    dropout,
    embed,
    gru_sequence,
)

ARCHITECTURES = ("rde", "cde", "ahde", "hre")

PROB_CLAMP = 1e-12


@dataclass
class ModelConfig:
    """Architecture selector plus every hyperparameter the models consume."""

    architecture: str
    vocab_size: int
    embed_dim: int = 300
    word_hidden: int = 300
    para_hidden: int = 100  # per direction; paragraph-level outputs are 2x this
    attention_dim: int = 0  # 0 -> default to paragraph-level output size
    dropout_rde_cde: float = 0.2
    dropout_ahde_word: float = 0.3
    conv_widths: tuple = (1, 3, 5, 7, 9)
    conv_filters_per_width: int = 200
    ip_mode: bool = False
    hre_sum_embeddings: bool = False
    max_tokens_per_chunk: int = 80
    max_chunks: int = 30
    sentence_delim_ids: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        for name in ("vocab_size", "embed_dim", "word_hidden", "para_hidden", "conv_filters_per_width"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("dropout_rde_cde", "dropout_ahde_word"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        self.conv_widths = tuple(int(w) for w in self.conv_widths)
        self.sentence_delim_ids = tuple(int(i) for i in self.sentence_delim_ids)
        if self.attention_dim <= 0:
            self.attention_dim = 2 * self.para_hidden

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


@dataclass
class ArticleEncoding:
    """Headline/body vectors produced by one forward pass."""

    u_H: Tensor
    u_B: Tensor
    attention: np.ndarray | None = None


@dataclass
class ParagraphScores:
    """Per-paragraph incongruence scores from the IP wrapper."""

    scores: list = field(default_factory=list)


def _truncate(headline_ids, chunks, config):
    limit = config.max_tokens_per_chunk
    headline = [int(t) for t in headline_ids][:limit]
    body = [[int(t) for t in chunk][:limit] for chunk in list(chunks)[: config.max_chunks]]
    if not any(t != PAD_ID for t in headline):
        raise EmptyInputError("headline is empty after truncation")
    if not any(t != PAD_ID for chunk in body for t in chunk):
        raise EmptyInputError("body is empty after truncation")
    return headline, body


def split_sentences(ids, delim_ids):
    """Sentence-level re-chunking of a paragraph; see corpus.split_sentence_ids."""
    return split_sentence_ids(ids, delim_ids)


class _DualEncoderModel:
    """Shared plumbing: config, construction RNG, dropout RNG, parameter list."""

    architecture = ""

    def __init__(self, config):
        if config.architecture != self.architecture:
            raise ConfigError(f"config.architecture {config.architecture!r} != {self.architecture!r}")
        self.config = config
        self._rng = np.random.default_rng(config.seed)
        self._dropout_rng = np.random.default_rng((config.seed, 0x0D0D))

    def parameters(self):
        raise NotImplementedError

    def score_instance(self, headline_ids, chunks, train=False):
        return self.encode_instance(headline_ids, chunks, train=train)[1]

    def encode_instance(self, headline_ids, chunks, train=False):
        raise NotImplementedError


class RdeModel(_DualEncoderModel):
    """Recurrent dual encoder: one shared GRU over headline and flattened body."""

    architecture = "rde"

    def __init__(self, config):
        super().__init__(config)
        self.embedding = EmbeddingTable(config.vocab_size, config.embed_dim, self._rng)
        self.gru = GruCell(config.embed_dim, config.word_hidden, self._rng, name="word_gru")
        self.scorer = BilinearScorer(config.word_hidden, self._rng)

    def parameters(self):
        return [self.embedding.table] + self.gru.parameters() + self.scorer.parameters()

    def _encode_ids(self, ids):
        xs = embed(ids, self.embedding)
        _, last = gru_sequence(self.gru, xs, np.asarray(ids) != PAD_ID)
        return last

    def encode_instance(self, headline_ids, chunks, train=False):
        headline, body = _truncate(headline_ids, chunks, self.config)
        flat = [t for chunk in body for t in chunk]
        u_H = dropout(self._encode_ids(headline), self.config.dropout_rde_cde, self._dropout_rng, train)
        u_B = dropout(self._encode_ids(flat), self.config.dropout_rde_cde, self._dropout_rng, train)
        enc = ArticleEncoding(u_H=u_H, u_B=u_B)
        return enc, bilinear_score(self.scorer, u_H, u_B)


class CdeModel(_DualEncoderModel):
    """Convolutional dual encoder: shared filter bank with max-over-time pooling."""

    architecture = "cde"

    def __init__(self, config):
        super().__init__(config)
        self.embedding = EmbeddingTable(config.vocab_size, config.embed_dim, self._rng)
        self.bank = ConvBank(config.embed_dim, config.conv_widths, config.conv_filters_per_width, self._rng)
        self.scorer = BilinearScorer(self.bank.total_filters, self._rng)

    def parameters(self):
        return [self.embedding.table] + self.bank.parameters() + self.scorer.parameters()

    def encode_instance(self, headline_ids, chunks, train=False):
        headline, body = _truncate(headline_ids, chunks, self.config)
        flat = [t for chunk in body for t in chunk]
        u_H = conv_encode(self.bank, embed(headline, self.embedding))
        u_B = conv_encode(self.bank, embed(flat, self.embedding))
        u_H = dropout(u_H, self.config.dropout_rde_cde, self._dropout_rng, train)
        u_B = dropout(u_B, self.config.dropout_rde_cde, self._dropout_rng, train)
        enc = ArticleEncoding(u_H=u_H, u_B=u_B)
        return enc, bilinear_score(self.scorer, u_H, u_B)


class AhdeModel(_DualEncoderModel):
    """Attentive hierarchical dual encoder: word GRU, paragraph BiGRU, attention.

    The headline runs through the same two levels as a one-chunk document.
    """

    architecture = "ahde"

    def __init__(self, config):
        super().__init__(config)
        self.embedding = EmbeddingTable(config.vocab_size, config.embed_dim, self._rng)
        self.word_gru = GruCell(config.embed_dim, config.word_hidden, self._rng, name="word_gru")
        self.para_fwd = GruCell(config.word_hidden, config.para_hidden, self._rng, name="para_fwd")
        self.para_bwd = GruCell(config.word_hidden, config.para_hidden, self._rng, name="para_bwd")
        out_dim = 2 * config.para_hidden
        self.attention = AttentionParams(out_dim, config.attention_dim, self._rng)
        self.scorer = BilinearScorer(out_dim, self._rng)

    def parameters(self):
        return (
            [self.embedding.table]
            + self.word_gru.parameters()
            + self.para_fwd.parameters()
            + self.para_bwd.parameters()
            + self.attention.parameters()
            + self.scorer.parameters()
        )

    def _word_vectors(self, body, train):
        vectors, mask = [], []
        for chunk in body:
            ids = np.asarray(chunk)
            if (ids != PAD_ID).any():
                _, last = gru_sequence(self.word_gru, embed(chunk, self.embedding), ids != PAD_ID)
                vectors.append(dropout(last, self.config.dropout_ahde_word, self._dropout_rng, train))
                mask.append(True)
            else:  # chunk exists only as batch padding
                vectors.append(Tensor(np.zeros(self.config.word_hidden)))
                mask.append(False)
        return stack_rows(vectors), np.asarray(mask, dtype=bool)

    def encode_instance(self, headline_ids, chunks, train=False):
        headline, body = _truncate(headline_ids, chunks, self.config)
        h_vecs, h_mask = self._word_vectors([headline], train)
        _, u_H = bigru_sequence(self.para_fwd, self.para_bwd, h_vecs, h_mask)
        b_vecs, b_mask = self._word_vectors(body, train)
        states, _ = bigru_sequence(self.para_fwd, self.para_bwd, b_vecs, b_mask)
        u_B, weights = attend(self.attention, states, u_H, b_mask)
        enc = ArticleEncoding(u_H=u_H, u_B=u_B, attention=weights.data.copy())
        return enc, bilinear_score(self.scorer, u_H, u_B)

    def score_with_attention(self, headline_ids, chunks, train=False):
        enc, prob = self.encode_instance(headline_ids, chunks, train=train)
        return prob, enc.attention


class HreModel(_DualEncoderModel):
    """Hierarchical recurrent encoder: mean word embeddings, paragraph BiGRU."""

    architecture = "hre"

    def __init__(self, config):
        super().__init__(config)
        self.embedding = EmbeddingTable(config.vocab_size, config.embed_dim, self._rng)
        self.para_fwd = GruCell(config.embed_dim, config.para_hidden, self._rng, name="para_fwd")
        self.para_bwd = GruCell(config.embed_dim, config.para_hidden, self._rng, name="para_bwd")
        self.scorer = BilinearScorer(2 * config.para_hidden, self._rng)

    def parameters(self):
        return (
            [self.embedding.table]
            + self.para_fwd.parameters()
            + self.para_bwd.parameters()
            + self.scorer.parameters()
        )

    def _paragraph_vectors(self, body, train):
        vectors, mask = [], []
        for index, chunk in enumerate(body):
            real = [t for t in chunk if t != PAD_ID]
            if not real:
                if chunk:
                    warnings.warn(f"skipping all-pad paragraph {index}", stacklevel=3)
                vectors.append(Tensor(np.zeros(self.config.embed_dim)))
                mask.append(False)
                continue
            vec = mean_over_axis(embed(real, self.embedding), 0)
            if self.config.hre_sum_embeddings:
                vec = vec * float(len(real))
            vectors.append(dropout(vec, self.config.dropout_ahde_word, self._dropout_rng, train))
            mask.append(True)
        return stack_rows(vectors), np.asarray(mask, dtype=bool)

    def encode_instance(self, headline_ids, chunks, train=False):
        headline, body = _truncate(headline_ids, chunks, self.config)
        h_vecs, h_mask = self._paragraph_vectors([headline], train)
        _, u_H = bigru_sequence(self.para_fwd, self.para_bwd, h_vecs, h_mask)
        b_vecs, b_mask = self._paragraph_vectors(body, train)
        _, u_B = bigru_sequence(self.para_fwd, self.para_bwd, b_vecs, b_mask)
        enc = ArticleEncoding(u_H=u_H, u_B=u_B)
        return enc, bilinear_score(self.scorer, u_H, u_B)


_MODEL_CLASSES = {cls.architecture: cls for cls in (RdeModel, CdeModel, AhdeModel, HreModel)}


def build_model(config):
    return _MODEL_CLASSES[config.architecture](config)


def ip_score(model, headline_ids, chunks):
    """Score each {headline, paragraph} pair independently; return the max.

    For hierarchical models the paragraph is re-chunked into sentences before
    scoring. Returns (max score, ParagraphScores).
    """
    chunks = list(chunks)
    if not chunks:
        raise EmptyInputError("ip_score: no paragraphs")
    scores = []
    for chunk in chunks:
        if model.architecture in ("ahde", "hre"):
            sub_chunks = split_sentences(chunk, model.config.sentence_delim_ids)
        else:
            sub_chunks = [chunk]
        scores.append(float(model.score_instance(headline_ids, sub_chunks).data))
    return max(scores), ParagraphScores(scores=scores)


def nll_loss(predictions, labels):
    """Mean binary cross-entropy over probability tensors with clamping."""
    if len(predictions) != len(labels):
        raise ContractError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not predictions:
        raise ContractError("nll_loss needs at least one instance")
    total = None
    for p, y in zip(predictions, labels):
        pc = clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
        term = -log(pc) if y else -log(1.0 - pc)
        total = term if total is None else total + term
    return total * (1.0 / len(predictions))


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(prefix, model):
    """Write `{prefix}.params` (INCG1 tensors) and `{prefix}.json` (config)."""
    save_parameters(f"{prefix}.params", model.parameters())
    with open(f"{prefix}.json", "w", encoding="utf-8") as fh:
        fh.write(model.config.to_json())


def load_checkpoint(prefix):
    with open(f"{prefix}.json", encoding="utf-8") as fh:
        config = ModelConfig.from_json(fh.read())
    model = build_model(config)
    load_parameters_into(f"{prefix}.params", model.parameters())
    return model

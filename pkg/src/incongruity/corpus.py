"""Labeled-dataset construction: cleansing, vocab, implantation, splits.

Incongruent instances are manufactured by implanting paragraphs from a donor
article into a target article; congruent instances are unmodified articles.
All randomness is derived from (seed, article id), so generation is a pure
function of its inputs and parallel or repeated runs agree byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import random
import re
from dataclasses import dataclass, field

from .errors import (
    ArticleRejectedError,
    ContractError,
    DataError,
    GenerationError,
    InfeasibleImplantError,
)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
SENTENCE_TERMINALS = (".", "!", "?")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

_FNC_STANCE_LABELS = {"unrelated": 1, "agree": 0, "disagree": 0, "discuss": 0}


def tokenize_text(text):
    """Lowercase and split on whitespace/punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


def split_sentence_ids(ids, delim_ids):
    """Split a token-id chunk into sentences after delimiter tokens.

    Falls back to the whole chunk when no delimiter is present.
    """
    delims = set(delim_ids)
    sentences, current = [], []
    for t in ids:
        current.append(t)
        if t in delims:
            sentences.append(current)
            current = []
    if current:
        sentences.append(current)
    return sentences if sentences else [list(ids)]


@dataclass
class RawArticle:
    id: str
    headline: str
    paragraphs: list
    source: str | None = None
    date: str | None = None

    def __post_init__(self):
        if not self.headline.strip():
            raise ContractError(f"article {self.id}: empty headline")
        self.paragraphs = [p for p in self.paragraphs if p.strip()]
        if not self.paragraphs:
            raise ContractError(f"article {self.id}: no non-empty paragraphs")


@dataclass
class LabeledInstance:
    id: str
    headline_ids: list
    chunks: list
    label: int
    provenance: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


# -- cleansing -----------------------------------------------------------------


@dataclass
class CleanseRules:
    """Configurable cleansing: regex strips, paragraph drops, ad-phrase drops."""

    strip_patterns: list = field(default_factory=list)
    drop_patterns: list = field(default_factory=list)
    ad_phrases: list = field(default_factory=list)

    def compiled(self):
        return (
            [re.compile(p) for p in self.strip_patterns],
            [re.compile(p) for p in self.drop_patterns],
            [phrase.lower() for phrase in self.ad_phrases],
        )


def cleanse(raw, rules=None):
    """Strip boilerplate and drop matching/advertising paragraphs.

    Idempotent; raises ArticleRejectedError when nothing survives.
    """
    if rules is None:
        rules = CleanseRules()
    strips, drops, phrases = rules.compiled()
    kept = []
    for paragraph in raw.paragraphs:
        text = paragraph
        for pattern in strips:
            while True:  # iterate so stripping cannot expose a fresh match
                replaced = pattern.sub("", text)
                if replaced == text:
                    break
                text = replaced
        text = text.strip()
        if not text:
            continue
        if any(p.fullmatch(text) for p in drops):
            continue
        if any(phrase in text.lower() for phrase in phrases):
            continue
        kept.append(text)
    if not kept:
        raise ArticleRejectedError(f"article {raw.id}: cleansing removed every paragraph")
    headline = raw.headline
    for pattern in strips:
        headline = pattern.sub("", headline).strip() or headline
    return RawArticle(id=raw.id, headline=headline, paragraphs=kept, source=raw.source, date=raw.date)


# -- vocabulary ----------------------------------------------------------------


class Vocabulary:
    """Token <-> contiguous id map; id 0 is padding, id 1 unknown."""

    def __init__(self, tokens_with_freq):
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN]
        self.freq = {PAD_TOKEN: 0, UNK_TOKEN: 0}
        for token, freq in tokens_with_freq:
            self.id_to_token.append(token)
            self.freq[token] = freq
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self):
        return len(self.id_to_token)

    def id_of(self, token):
        return self.token_to_id.get(token, 1)

    def encode(self, tokens):
        return [self.id_of(t) for t in tokens]

    def encode_text(self, text):
        return self.encode(tokenize_text(text))

    def sentence_delim_ids(self):
        return tuple(self.token_to_id[t] for t in SENTENCE_TERMINALS if t in self.token_to_id)

    def save_tsv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for i, token in enumerate(self.id_to_token):
                fh.write(f"{token}\t{i}\t{self.freq.get(token, 0)}\n")

    @classmethod
    def load_tsv(cls, path):
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                token, idx, freq = line.rstrip("\n").split("\t")
                rows.append((token, int(idx), int(freq)))
        rows.sort(key=lambda r: r[1])
        if not rows or rows[0][0] != PAD_TOKEN or rows[1][0] != UNK_TOKEN:
            raise DataError(f"{path}: not a vocabulary file (missing pad/unk rows)")
        return cls([(t, f) for t, _, f in rows[2:]])


def build_vocab(corpus, min_freq=1):
    """Count tokens over headlines and paragraphs; keep those >= min_freq."""
    if min_freq < 1:
        raise ContractError("min_freq must be >= 1")
    counts = {}
    for article in corpus:
        for text in [article.headline, *article.paragraphs]:
            for token in tokenize_text(text):
                counts[token] = counts.get(token, 0) + 1
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocabulary([(t, counts[t]) for t in kept])


def tokenize(text, vocab):
    """Text -> token id list under the given vocabulary."""
    return vocab.encode_text(text)


# -- implantation ----------------------------------------------------------------


def _instance_rng(seed, tag):
    return random.Random(f"{seed}:{tag}")


def _tokenized_chunks(article, vocab, cache=None):
    if cache is not None and article.id in cache:
        return cache[article.id]
    chunks = [vocab.encode_text(p) for p in article.paragraphs]
    chunks = [c for c in chunks if c]
    entry = (vocab.encode_text(article.headline), chunks)
    if cache is not None:
        cache[article.id] = entry
    return entry


def _implanted_fraction(donor_tokens, target_tokens):
    return donor_tokens / (donor_tokens + target_tokens)


def implant_rule1(target, donor, n, seed, vocab, cache=None):
    """Insert n consecutive donor paragraphs at one random boundary.

    The implanted block must take up less than half of the resulting body
    tokens; otherwise InfeasibleImplantError is raised and the caller should
    resample the donor.
    """
    if donor.id == target.id:
        raise ContractError("donor and target must differ")
    if n < 1:
        raise ContractError("rule 1 needs n >= 1")
    rng = _instance_rng(seed, f"r1:{target.id}")
    head_ids, target_chunks = _tokenized_chunks(target, vocab, cache)
    _, donor_chunks = _tokenized_chunks(donor, vocab, cache)
    target_tokens = sum(len(c) for c in target_chunks)
    sizes = [len(c) for c in donor_chunks]
    feasible_starts = [
        s
        for s in range(len(donor_chunks) - n + 1)
        if _implanted_fraction(sum(sizes[s : s + n]), target_tokens) < 0.5
    ]
    if not feasible_starts:
        raise InfeasibleImplantError(f"no feasible {n}-paragraph block in donor {donor.id} for target {target.id}")
    start = rng.choice(feasible_starts)
    boundary = rng.randint(0, len(target_chunks))
    block = donor_chunks[start : start + n]
    body = target_chunks[:boundary] + block + target_chunks[boundary:]
    return LabeledInstance(
        id=target.id,
        headline_ids=head_ids,
        chunks=body,
        label=1,
        provenance={
            "target": target.id,
            "donor": donor.id,
            "rule": 1,
            "donor_indices": list(range(start, start + n)),
            "inserted_at": list(range(boundary, boundary + n)),
        },
    )


def implant_rule2(target, donor, n, seed, vocab, keep_order=True, cache=None, max_tries=100):
    """Insert n non-consecutive donor paragraphs at independent boundaries.

    keep_order=True preserves the donors' original relative order in the
    output; keep_order=False shuffles them across the chosen slots.
    """
    if donor.id == target.id:
        raise ContractError("donor and target must differ")
    if n < 2:
        raise ContractError("rule 2 needs n >= 2")
    rng = _instance_rng(seed, f"r2:{target.id}")
    head_ids, target_chunks = _tokenized_chunks(target, vocab, cache)
    _, donor_chunks = _tokenized_chunks(donor, vocab, cache)
    if len(donor_chunks) < n:
        raise InfeasibleImplantError(f"donor {donor.id} has fewer than {n} paragraphs")
    target_tokens = sum(len(c) for c in target_chunks)
    sizes = sorted(len(c) for c in donor_chunks)
    if _implanted_fraction(sum(sizes[:n]), target_tokens) >= 0.5:
        raise InfeasibleImplantError(f"any {n} paragraphs of donor {donor.id} exceed the half-length budget")
    indices = None
    for _ in range(max_tries):
        candidate = sorted(rng.sample(range(len(donor_chunks)), n))
        if _implanted_fraction(sum(len(donor_chunks[i]) for i in candidate), target_tokens) < 0.5:
            indices = candidate
            break
    if indices is None:
        order = sorted(range(len(donor_chunks)), key=lambda i: len(donor_chunks[i]))
        indices = sorted(order[:n])

    # choose insertion boundaries sequentially over the growing body
    body = list(target_chunks)
    slots = []
    for _ in range(n):
        boundary = rng.randint(0, len(body))
        body.insert(boundary, None)
        slots = [s + 1 if s >= boundary else s for s in slots]
        slots.append(boundary)
    ordered_slots = sorted(slots)
    donors = [donor_chunks[i] for i in indices]
    if not keep_order:
        rng.shuffle(donors)
    for slot, chunk in zip(ordered_slots, donors):
        body[slot] = chunk
    return LabeledInstance(
        id=target.id,
        headline_ids=head_ids,
        chunks=body,
        label=1,
        provenance={
            "target": target.id,
            "donor": donor.id,
            "rule": 2,
            "keep_order": keep_order,
            "donor_indices": indices,
            "inserted_at": ordered_slots,
        },
    )


def reconstruct_target_chunks(instance):
    """Undo an implantation using provenance; returns the original body chunks."""
    implanted = set(instance.provenance.get("inserted_at", ()))
    return [c for i, c in enumerate(instance.chunks) if i not in implanted]


# -- whole / paragraph datasets ---------------------------------------------------


@dataclass
class DatasetBundle:
    """Named instance splits plus the vocabulary and a generation manifest."""

    splits: dict
    vocab: Vocabulary
    manifest: dict = field(default_factory=dict)

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        for name, instances in self.splits.items():
            with open(os.path.join(out_dir, f"{name}.jsonl"), "w", encoding="utf-8") as fh:
                for inst in instances:
                    fh.write(inst.to_json() + "\n")
        self.vocab.save_tsv(os.path.join(out_dir, "vocab.tsv"))
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, in_dir):
        splits = {}
        for name in ("train", "dev", "test"):
            path = os.path.join(in_dir, f"{name}.jsonl")
            if os.path.exists(path):
                with open(path, encoding="utf-8") as fh:
                    splits[name] = [LabeledInstance.from_json(line) for line in fh if line.strip()]
        if not splits:
            raise DataError(f"{in_dir}: no split files found")
        vocab = Vocabulary.load_tsv(os.path.join(in_dir, "vocab.tsv"))
        manifest_path = os.path.join(in_dir, "manifest.json")
        manifest = {}
        if os.path.exists(manifest_path):
            with open(manifest_path, encoding="utf-8") as fh:
                manifest = json.load(fh)
        return cls(splits=splits, vocab=vocab, manifest=manifest)


def _content_hash(splits):
    digest = hashlib.sha256()
    for name in sorted(splits):
        for inst in splits[name]:
            digest.update(inst.to_json().encode("utf-8"))
            digest.update(b"\n")
    return digest.hexdigest()


def _implant_with_resampling(target, pool, seed, vocab, cache, rule=None, n=None, keep_order=None, donor_tries=25):
    """Try donors until an implant succeeds; returns the labeled instance."""
    rng = _instance_rng(seed, f"pick:{target.id}")
    wanted_rule = rule if rule is not None else rng.choice((1, 2))
    for attempt_rule in (wanted_rule, 1):
        for _ in range(donor_tries):
            donor = pool[rng.randrange(len(pool))]
            if donor.id == target.id:
                continue
            _, donor_chunks = _tokenized_chunks(donor, vocab, cache)
            _, target_chunks = _tokenized_chunks(target, vocab, cache)
            target_tokens = sum(len(c) for c in target_chunks)
            try:
                if attempt_rule == 1:
                    n_max = _rule1_max_n(donor_chunks, target_tokens)
                    lo = 1 if n is None else n
                    if n_max < lo:
                        raise InfeasibleImplantError("donor too large")
                    pick = rng.randint(lo, n_max) if n is None else n
                    return implant_rule1(target, donor, pick, seed, vocab, cache=cache)
                n_max = _rule2_max_n(donor_chunks, target_tokens)
                if n_max < 2:
                    raise InfeasibleImplantError("donor too large")
                pick = rng.randint(2, n_max) if n is None else n
                ko = rng.choice((True, False)) if keep_order is None else keep_order
                return implant_rule2(target, donor, pick, seed, vocab, keep_order=ko, cache=cache)
            except InfeasibleImplantError:
                continue
        if attempt_rule == 1:
            break
    raise GenerationError(f"no feasible implant found for article {target.id}")


def _rule1_max_n(donor_chunks, target_tokens):
    sizes = [len(c) for c in donor_chunks]
    best = 0
    for n in range(1, len(sizes) + 1):
        feasible = any(
            _implanted_fraction(sum(sizes[s : s + n]), target_tokens) < 0.5 for s in range(len(sizes) - n + 1)
        )
        if feasible:
            best = n
        else:
            break
    return best

def _rule2_max_n(donor_chunks, target_tokens):
    sizes = sorted(len(c) for c in donor_chunks)
    best = 0
    for n in range(1, len(sizes) + 1):
        if _implanted_fraction(sum(sizes[:n]), target_tokens) < 0.5:
            best = n
        else:
            break
    return best


def make_whole_dataset(corpus, ratio=0.5, seed=0, split_fracs=(0.8, 0.1, 0.1), min_freq=1, rules=None):
    """Build article-level labeled splits with implanted incongruent instances.

    Within each split the first round(n*ratio) shuffled articles become
    implantation targets (label 1) and the rest stay unmodified (label 0), so
    the two classes never share a headline.
    """
    if not 0.0 < ratio < 1.0:
        raise ContractError("ratio must lie strictly between 0 and 1")
    cleansed, rejected = [], 0
    for article in corpus:
        try:
            cleansed.append(cleanse(article, rules))
        except ArticleRejectedError:
            rejected += 1
    if len(cleansed) < 6:
        raise DataError(f"corpus too small after cleansing ({len(cleansed)} articles)")
    vocab = build_vocab(cleansed, min_freq)
    cache = {}
    usable = []
    for article in cleansed:
        head_ids, chunks = _tokenized_chunks(article, vocab, cache)
        if head_ids and chunks:
            usable.append(article)
    cleansed = usable

    order = list(range(len(cleansed)))
    random.Random(f"{seed}:split").shuffle(order)
    shuffled = [cleansed[i] for i in order]
    n_train = int(round(split_fracs[0] * len(shuffled)))
    n_dev = int(round(split_fracs[1] * len(shuffled)))
    split_articles = {
        "train": shuffled[:n_train],
        "dev": shuffled[n_train : n_train + n_dev],
        "test": shuffled[n_train + n_dev :],
    }

    splits = {}
    for name, articles in split_articles.items():
        if not articles:
            raise DataError(f"split {name!r} received no articles")
        n_incongruent = int(round(len(articles) * ratio))
        instances = []
        for position, article in enumerate(articles):
            if position < n_incongruent:
                instances.append(_implant_with_resampling(article, articles, seed, vocab, cache))
            else:
                head_ids, chunks = _tokenized_chunks(article, vocab, cache)
                instances.append(
                    LabeledInstance(
                        id=article.id,
                        headline_ids=head_ids,
                        chunks=chunks,
                        label=0,
                        provenance={"target": article.id},
                    )
                )
        splits[name] = instances

    _check_invariants(splits, split_articles)
    manifest = {
        "kind": "whole",
        "seed": seed,
        "ratio": ratio,
        "split_fracs": list(split_fracs),
        "min_freq": min_freq,
        "articles_rejected": rejected,
        "vocab_size": len(vocab),
        "counts": {name: len(insts) for name, insts in splits.items()},
        "stats": _corpus_stats(splits),
        "content_hash": _content_hash(splits),
    }
    return DatasetBundle(splits=splits, vocab=vocab, manifest=manifest)


def _check_invariants(splits, split_articles):
    seen = {}
    for name, articles in split_articles.items():
        for article in articles:
            if article.id in seen and seen[article.id] != name:
                raise GenerationError(f"article {article.id} appears in splits {seen[article.id]} and {name}")
            seen[article.id] = name
    congruent, incongruent = set(), set()
    for instances in splits.values():
        for inst in instances:
            key = tuple(inst.headline_ids)
            (incongruent if inst.label else congruent).add(key)
    overlap = congruent & incongruent
    if overlap:
        raise GenerationError(f"{len(overlap)} headlines appear in both label classes; aborting generation")


def _corpus_stats(splits):
    token_counts, chunk_counts, head_counts = [], [], []
    for instances in splits.values():
        for inst in instances:
            chunk_counts.append(len(inst.chunks))
            token_counts.append(sum(len(c) for c in inst.chunks))
            head_counts.append(len(inst.headline_ids))
    n = max(1, len(chunk_counts))
    return {
        "avg_headline_tokens": sum(head_counts) / n,
        "avg_body_tokens": sum(token_counts) / n,
        "avg_body_chunks": sum(chunk_counts) / n,
    }


def make_paragraph_dataset(bundle, seed=0):
    """Explode whole-article splits into {headline, paragraph} instances.

    Congruent articles contribute one instance per own paragraph; each
    incongruent article contributes the same number of instances, pairing its
    headline with paragraphs sampled from other articles. Chunks become
    sentences.
    """
    delims = bundle.vocab.sentence_delim_ids()
    splits = {}
    for name, instances in bundle.splits.items():
        congruent = [inst for inst in instances if inst.label == 0]
        if not congruent:
            raise DataError(f"split {name!r} has no congruent instances to sample foreign paragraphs from")
        out = []
        for inst in instances:
            rng = _instance_rng(seed, f"para:{name}:{inst.id}")
            if inst.label == 0:
                for i, chunk in enumerate(inst.chunks):
                    out.append(
                        LabeledInstance(
                            id=f"{inst.id}#p{i}",
                            headline_ids=inst.headline_ids,
                            chunks=_sentence_chunks(chunk, delims),
                            label=0,
                            provenance={"target": inst.id, "source": inst.id, "source_chunk": i},
                        )
                    )
            else:
                for i in range(len(inst.chunks)):
                    donor = congruent[rng.randrange(len(congruent))]
                    while donor.provenance["target"] == inst.provenance["target"] and len(congruent) > 1:
                        donor = congruent[rng.randrange(len(congruent))]
                    j = rng.randrange(len(donor.chunks))
                    out.append(
                        LabeledInstance(
                            id=f"{inst.id}#f{i}",
                            headline_ids=inst.headline_ids,
                            chunks=_sentence_chunks(donor.chunks[j], delims),
                            label=1,
                            provenance={"target": inst.id, "source": donor.id, "source_chunk": j},
                        )
                    )
        splits[name] = out
    whole_counts = {name: len(insts) for name, insts in bundle.splits.items()}
    counts = {name: len(insts) for name, insts in splits.items()}
    manifest = {
        "kind": "paragraph",
        "seed": seed,
        "counts": counts,
        "expansion_factor": {
            name: counts[name] / max(1, whole_counts.get(name, 0)) for name in counts
        },
        "stats": _corpus_stats(splits),
        "content_hash": _content_hash(splits),
    }
    return DatasetBundle(splits=splits, vocab=bundle.vocab, manifest=manifest)


def _sentence_chunks(chunk, delims):
    return split_sentence_ids(chunk, delims)


def make_type_testsets(corpus, seed=0, rules=None, min_freq=1, vocab=None):
    """Generate the four implantation-type test sets (balanced with congruent).

    Type 1: one consecutive paragraph; Type 2: a longer consecutive block;
    Type 3: scattered paragraphs keeping donor order; Type 4: scattered and
    shuffled.
    """
    cleansed = []
    for article in corpus:
        try:
            cleansed.append(cleanse(article, rules))
        except ArticleRejectedError:
            continue
    if vocab is None:
        vocab = build_vocab(cleansed, min_freq)
    cache = {}
    specs = {
        "type1": {"rule": 1, "n": 1},
        "type2": {"rule": 1, "n": None, "n_min": 2},
        "type3": {"rule": 2, "keep_order": True},
        "type4": {"rule": 2, "keep_order": False},
    }
    sets = {}
    skipped = {}
    for name, spec in specs.items():
        order = list(range(len(cleansed)))
        random.Random(f"{seed}:{name}").shuffle(order)
        articles = [cleansed[i] for i in order]
        half = len(articles) // 2
        instances = []
        skip_count = 0
        for position, article in enumerate(articles):
            head_ids, chunks = _tokenized_chunks(article, vocab, cache)
            if position >= half:
                instances.append(
                    LabeledInstance(
                        id=article.id, headline_ids=head_ids, chunks=chunks, label=0,
                        provenance={"target": article.id},
                    )
                )
                continue
            try:
                inst = _typed_implant(article, articles, seed, vocab, cache, name, spec)
            except GenerationError:
                skip_count += 1
                continue
            inst.provenance["type"] = int(name[-1])
            instances.append(inst)
        sets[name] = instances
        skipped[name] = skip_count
    return sets, vocab, {"seed": seed, "skipped": skipped, "counts": {k: len(v) for k, v in sets.items()}}


def _typed_implant(article, pool, seed, vocab, cache, name, spec):
    rng = _instance_rng(seed, f"{name}:{article.id}")
    _, target_chunks = _tokenized_chunks(article, vocab, cache)
    target_tokens = sum(len(c) for c in target_chunks)
    for _ in range(25):
        donor = pool[rng.randrange(len(pool))]
        if donor.id == article.id:
            continue
        _, donor_chunks = _tokenized_chunks(donor, vocab, cache)
        try:
            if spec["rule"] == 1:
                n_max = _rule1_max_n(donor_chunks, target_tokens)
                n_min = spec.get("n_min", 1)
                n = spec["n"] if spec.get("n") else (rng.randint(n_min, n_max) if n_max >= n_min else 0)
                if n < n_min or n > n_max:
                    raise InfeasibleImplantError("no feasible n")
                return implant_rule1(article, donor, n, seed, vocab, cache=cache)
            n_max = _rule2_max_n(donor_chunks, target_tokens)
            if n_max < 2:
                raise InfeasibleImplantError("no feasible n")
            n = rng.randint(2, n_max)
            return implant_rule2(article, donor, n, seed, vocab, keep_order=spec["keep_order"], cache=cache)
        except InfeasibleImplantError:
            continue
    raise GenerationError(f"{name}: no feasible implant for {article.id}")


# -- toy corpus ------------------------------------------------------------------


def gen_toy_corpus(
    topics=2,
    articles_per_topic=100,
    vocab_per_topic=120,
    seed=0,
    paragraphs_range=(3, 6),
    sentences_per_paragraph=(1, 2),
    tokens_per_sentence=(5, 9),
    headline_tokens=(4, 7),
    entity_pool=25,
    theme_size=6,
    theme_prob=0.8,
):
    """Synthesize articles with disjoint per-topic vocabularies.

    Each article is anchored on one "entity" word from its topic's entity
    pool: the entity opens the headline and recurs in every sentence, with the
    remaining tokens drawn from an article theme plus topic background. An
    implanted paragraph therefore carries a foreign anchor, so implants are
    detectable whether the donor shares the topic or not.
    """
    if vocab_per_topic <= entity_pool:
        raise ContractError("vocab_per_topic must exceed entity_pool")
    rng = random.Random(f"{seed}:toy")
    topic_words = [[f"t{k}w{j:03d}" for j in range(vocab_per_topic)] for k in range(topics)]
    articles = []
    used_headlines = set()
    for k in range(topics):
        entities = topic_words[k][:entity_pool]
        background = topic_words[k][entity_pool:]
        for i in range(articles_per_topic):
            entity = rng.choice(entities)
            theme = rng.sample(background, min(theme_size, len(background)))

            def draw():
                return rng.choice(theme) if rng.random() < theme_prob else rng.choice(background)

            headline = None
            for _ in range(100):
                filler = [draw() for _ in range(rng.randint(*headline_tokens) - 1)]
                candidate = " ".join([entity] + filler)
                if candidate not in used_headlines:
                    headline = candidate
                    break
            if headline is None:
                raise GenerationError(f"could not generate a unique headline for topic {k} article {i}")
            used_headlines.add(headline)
            body = []
            for _ in range(rng.randint(*paragraphs_range)):
                sentences = []
                for _ in range(rng.randint(*sentences_per_paragraph)):
                    words = [draw() for _ in range(rng.randint(*tokens_per_sentence) - 1)]
                    words.insert(rng.randrange(len(words) + 1), entity)
                    sentences.append(" ".join(words) + " .")
                body.append(" ".join(sentences))
            articles.append(RawArticle(id=f"a{k}-{i:05d}", headline=headline, paragraphs=body, source=f"topic{k}"))
    return articles


# -- FNC-style import --------------------------------------------------------------


def import_fnc_style(stance_path, body_path, min_freq=1):
    """Import (headline, bodyId, stance) + (bodyId, bodyText) tables.

    Stance "unrelated" maps to label 1, {agree, disagree, discuss} to 0;
    anything else, or a missing body id, rejects the row with its line number.
    Returns (instances, vocab, rejected) where rejected is [(line, reason)].
    """
    bodies = {}
    with open(body_path, encoding="utf-8", newline="") as fh:
        for line_no, fields in enumerate(csv.reader(fh), start=1):
            if not fields:
                continue
            if line_no == 1 and fields[-1].strip().lower() in ("articlebody", "bodytext", "body"):
                continue
            bodies[fields[0].strip()] = ",".join(fields[1:])

    rows, rejected = [], []
    with open(stance_path, encoding="utf-8", newline="") as fh:
        for line_no, fields in enumerate(csv.reader(fh), start=1):
            if not fields:
                continue
            if line_no == 1 and fields[-1].strip().lower() == "stance":
                continue
            if len(fields) < 3:
                rejected.append((line_no, "expected headline,bodyId,stance"))
                continue
            headline, body_id, stance = fields[0], fields[1].strip(), fields[2].strip().lower()
            if stance not in _FNC_STANCE_LABELS:
                rejected.append((line_no, f"unknown stance {stance!r}"))
                continue
            if body_id not in bodies:
                rejected.append((line_no, f"missing body id {body_id!r}"))
                continue
            if not headline.strip() or not bodies[body_id].strip():
                rejected.append((line_no, "empty headline or body"))
                continue
            rows.append((line_no, headline, body_id, stance))

    pseudo_articles = []
    for line_no, headline, body_id, stance in rows:
        paragraphs = [p for p in re.split(r"\n\s*\n", bodies[body_id]) if p.strip()] or [bodies[body_id]]
        pseudo_articles.append(RawArticle(id=f"fnc{line_no}", headline=headline, paragraphs=paragraphs))
    vocab = build_vocab(pseudo_articles, min_freq)
    instances = []
    for (line_no, headline, body_id, stance), article in zip(rows, pseudo_articles):
        instances.append(
            LabeledInstance(
                id=article.id,
                headline_ids=vocab.encode_text(headline),
                chunks=[vocab.encode_text(p) for p in article.paragraphs],
                label=_FNC_STANCE_LABELS[stance],
                provenance={"stance": stance, "body_id": body_id, "line": line_no},
            )
        )
    return instances, vocab, rejected


# -- corpus file I/O ------------------------------------------------------------


def save_corpus_jsonl(path, articles):
    with open(path, "w", encoding="utf-8") as fh:
        for article in articles:
            record = {"id": article.id, "headline": article.headline, "paragraphs": article.paragraphs}
            if article.source:
                record["source"] = article.source
            if article.date:
                record["date"] = article.date
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")


def load_corpus_jsonl(path):
    articles = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                articles.append(
                    RawArticle(
                        id=str(record["id"]),
                        headline=record["headline"],
                        paragraphs=list(record["paragraphs"]),
                        source=record.get("source"),
                        date=record.get("date"),
                    )
                )
            except (KeyError, ValueError, ContractError) as exc:
                raise DataError(f"{path}:{line_no}: bad article record ({exc})") from exc
    if not articles:
        raise DataError(f"{path}: no articles")
    return articles

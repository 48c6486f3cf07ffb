"""Seeded synthetic corpus generator for end-to-end experiments.

Sentences are filler words with gazetteer entities inserted. Each sentence
draws a single entity type and contains one two-word phrase followed later
by one single-word entity of that type; a configurable fraction of
sentences upgrades the phrase to a nested one whose second word is gold on
its own as well, giving properly nested gold. Word pools are disjoint by
construction:

  * fillers never belong to any entity,
  * single-word entities are gold wherever they occur,
  * phrase starters appear only phrase-initial, continuers only second,
  * nested-inner words appear only as the second word of a nested phrase,
    where they are gold both alone and as part of the enclosing phrase.

Entities never touch (at least one filler sits between them) and the
phrase precedes the single within every sentence. Both constraints keep
boundary-pair features unambiguous, so a linear head over the toy encoder
can separate the classes; without them, crossing spans such as
(starter .. later single) are provably inseparable from true spans.

The noise knob replaces fillers with out-of-vocabulary words at the given
rate. All randomness flows from the seed, so identical configs produce
identical corpora.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Mention, Sample, TokenSpan

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"
_TYPE_NAMES = ("alpha", "beta", "gamma", "delta", "kappa", "sigma", "omega", "rho")


@dataclass(frozen=True)
class SynthConfig:
    n_train: int = 2000
    n_val: int = 500
    n_test: int = 500
    n_types: int = 2
    nested_frac: float = 0.1
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("all split sizes must be >= 1")
        if not (1 <= self.n_types <= len(_TYPE_NAMES)):
            raise ValueError(f"n_types must lie in [1, {len(_TYPE_NAMES)}]")
        if not (0.0 <= self.nested_frac <= 1.0):
            raise ValueError("nested_frac must lie in [0, 1]")
        if not (0.0 <= self.noise <= 1.0):
            raise ValueError("noise must lie in [0, 1]")

    @property
    def entity_types(self) -> tuple[str, ...]:
        return _TYPE_NAMES[: self.n_types]


@dataclass(frozen=True)
class _Pools:
    fillers: tuple[str, ...]
    starters: dict[str, tuple[str, ...]]
    continuers: dict[str, tuple[str, ...]]
    singles: dict[str, tuple[str, ...]]
    inners: dict[str, tuple[str, ...]]


def _make_words(rng: np.random.Generator, count: int, taken: set[str]) -> tuple[str, ...]:
    words = []
    while len(words) < count:
        n_syll = int(rng.integers(2, 4))
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(n_syll)
        )
        if word not in taken:
            taken.add(word)
            words.append(word)
    return tuple(words)


def _make_pools(rng: np.random.Generator, types: tuple[str, ...]) -> _Pools:
    taken: set[str] = set()
    fillers = _make_words(rng, 40, taken)
    starters = {t: _make_words(rng, 12, taken) for t in types}
    continuers = {t: _make_words(rng, 12, taken) for t in types}
    singles = {t: _make_words(rng, 18, taken) for t in types}
    inners = {t: _make_words(rng, 2, taken) for t in types}
    return _Pools(fillers, starters, continuers, singles, inners)


def _pick(rng: np.random.Generator, pool: tuple[str, ...]) -> str:
    return pool[rng.integers(len(pool))]


def _build_sample(
    sample_id: str,
    rng: np.random.Generator,
    pools: _Pools,
    etype: str,
    nested: bool,
    noise: float,
) -> Sample:
    n_fillers = int(rng.integers(6, 13))
    words: list[str] = []
    for _ in range(n_fillers):
        if noise > 0.0 and rng.random() < noise:
            words.append(_pick(rng, pools.fillers) + str(rng.integers(10, 100)))
        else:
            words.append(_pick(rng, pools.fillers))
    # One phrase, then one single-word entity. Entities as (tokens, has_inner).
    if nested:
        phrase = ([_pick(rng, pools.starters[etype]), _pick(rng, pools.inners[etype])], True)
    else:
        phrase = ([_pick(rng, pools.starters[etype]), _pick(rng, pools.continuers[etype])], False)
    single = ([_pick(rng, pools.singles[etype])], False)
    phrases = [phrase, single]

    # Distinct insertion slots keep at least one filler between entities,
    # and sorting keeps the phrase ahead of the single.
    slots = sorted(rng.choice(n_fillers + 1, size=len(phrases), replace=False).tolist())
    by_slot = dict(zip(slots, range(len(phrases))))
    items: list[object] = []
    for i in range(n_fillers + 1):
        if i in by_slot:
            items.append(phrases[by_slot[i]])
        if i < n_fillers:
            items.append(words[i])

    tokens: list[str] = []
    spans: list[TokenSpan] = []
    gold: set[Mention] = set()
    pos = 0

    def push(word: str) -> TokenSpan:
        nonlocal pos
        if tokens:
            pos += 1
        span = TokenSpan(pos, pos + len(word))
        tokens.append(word)
        spans.append(span)
        pos = span.end
        return span

    for item in items:
        if isinstance(item, str):
            push(item)
            continue
        phrase_words, has_inner = item  # type: ignore[misc]
        phrase_spans = [push(w) for w in phrase_words]
        gold.add(Mention(sample_id, etype, phrase_spans[0].begin, phrase_spans[-1].end))
        if has_inner:
            gold.add(Mention(sample_id, etype, phrase_spans[-1].begin, phrase_spans[-1].end))

    return Sample(
        id=sample_id,
        text=" ".join(tokens),
        tokens=tuple(spans),
        gold=frozenset(gold),
    )


def _build_split(
    name: str, count: int, rng: np.random.Generator, pools: _Pools, config: SynthConfig
) -> list[Sample]:
    n_nested = int(round(config.nested_frac * count))
    nested_idx = set(rng.choice(count, size=n_nested, replace=False).tolist()) if n_nested else set()
    types = config.entity_types
    return [
        _build_sample(
            f"{name}-{i:05d}",
            rng,
            pools,
            types[int(rng.integers(len(types)))],
            i in nested_idx,
            config.noise,
        )
        for i in range(count)
    ]


def generate(config: SynthConfig) -> dict[str, list[Sample]]:
    """Generate the train/val/test splits for one seeded configuration."""
    rng = np.random.default_rng(config.seed)
    pools = _make_pools(rng, config.entity_types)
    return {
        "train": _build_split("train", config.n_train, rng, pools, config),
        "val": _build_split("val", config.n_val, rng, pools, config),
        "test": _build_split("test", config.n_test, rng, pools, config),
    }


def nested_inner_mentions(samples: list[Sample]) -> set[Mention]:
    """Gold mentions strictly contained inside another gold mention."""
    inner: set[Mention] = set()
    for s in samples:
        for m in s.gold:
            for other in s.gold:
                if m is not other and other.begin <= m.begin and m.end <= other.end and (
                    (other.begin, other.end) != (m.begin, m.end)
                ):
                    inner.add(m)
    return inner

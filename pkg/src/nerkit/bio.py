"""BIO tag scheme: tagset construction, encoding, and decoding.

The tag list is ["O"] followed by a B-/I- pair per entity type, in the
order the types were given, so index 0 is always the outside tag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Mention, PredictionSet, Sample
from .errors import EncodeError

OUTSIDE = "O"


@dataclass(frozen=True)
class Tagset:
    """Derived tag inventory for a fixed, ordered list of entity types."""

    entity_types: tuple[str, ...]
    tags: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        if not self.entity_types:
            raise ValueError("tagset needs at least one entity type")
        if len(set(self.entity_types)) != len(self.entity_types):
            raise ValueError("entity types must be unique")
        for t in self.entity_types:
            if not t or any(c.isspace() for c in t):
                raise ValueError(f"entity type {t!r} must be non-empty and contain no whitespace")
        tags = [OUTSIDE]
        for t in self.entity_types:
            tags.append(f"B-{t}")
            tags.append(f"I-{t}")
        object.__setattr__(self, "tags", tuple(tags))

    def __len__(self) -> int:
        return len(self.tags)

    def index(self, tag: str) -> int:
        try:
            return self.tags.index(tag)
        except ValueError:
            raise KeyError(f"tag {tag!r} not in tagset") from None

    def begin_index(self, entity_type: str) -> int:
        return 1 + 2 * self._type_pos(entity_type)

    def inside_index(self, entity_type: str) -> int:
        return 2 + 2 * self._type_pos(entity_type)

    def _type_pos(self, entity_type: str) -> int:
        try:
            return self.entity_types.index(entity_type)
        except ValueError:
            raise KeyError(f"entity type {entity_type!r} not in tagset") from None


def resolve_overlaps(gold: frozenset[Mention] | PredictionSet) -> tuple[set[Mention], int]:
    """Reduce overlapping mentions to a non-overlapping subset, longest wins.

    Ties break deterministically on (begin, type). Returns the kept set and
    the number of dropped mentions so callers can surface a warning.
    """
    ordered = sorted(gold, key=lambda m: (-(m.end - m.begin), m.begin, m.entity_type, m.sample_id))
    kept: list[Mention] = []
    for m in ordered:
        if not any(m.overlaps(k) for k in kept):
            kept.append(m)
    return set(kept), len(ordered) - len(kept)


def _token_range(sample: Sample, mention: Mention) -> tuple[int, int]:
    """Token index range [tb, te] covered exactly by a mention."""
    tb = te = -1
    for i, ts in enumerate(sample.tokens):
        if ts.begin == mention.begin:
            tb = i
        if ts.end == mention.end:
            te = i
    if tb < 0 or te < 0 or te < tb:
        raise EncodeError(f"mention {mention} does not align with token boundaries")
    return tb, te


def encode(sample: Sample, tagset: Tagset) -> list[int]:
    """Encode gold mentions as one tag index per token.

    Gold must be non-overlapping and token-aligned; violations raise
    EncodeError naming the offending mention. Use resolve_overlaps first
    when the corpus allows nesting.
    """
    gold = sorted(sample.gold, key=lambda m: (m.begin, m.end))
    for a, b in zip(gold, gold[1:]):
        if a.overlaps(b):
            raise EncodeError(f"mention {b} overlaps {a}; tagging cannot represent overlaps")
    tags = [0] * len(sample.tokens)
    for m in gold:
        try:
            b_idx = tagset.begin_index(m.entity_type)
        except KeyError:
            raise EncodeError(f"mention {m} has a type outside the tagset") from None
        tb, te = _token_range(sample, m)
        tags[tb] = b_idx
        for i in range(tb + 1, te + 1):
            tags[i] = tagset.inside_index(m.entity_type)
    return tags


def decode(tags: list[int], sample: Sample, tagset: Tagset) -> PredictionSet:
    """Decode a tag sequence into mentions; total, never raises.

    A stray I- tag (no matching B-/I- run in progress) is repaired by
    treating it as B-. Emitted mentions never overlap because runs cover
    disjoint token ranges.
    """
    if len(tags) != len(sample.tokens):
        raise ValueError(f"expected {len(sample.tokens)} tags for sample {sample.id!r}, got {len(tags)}")
    mentions: PredictionSet = set()
    run_start: int | None = None
    run_type = ""

    def close(last_token: int) -> None:
        nonlocal run_start
        if run_start is not None:
            mentions.add(
                Mention(
                    sample.id,
                    run_type,
                    sample.tokens[run_start].begin,
                    sample.tokens[last_token].end,
                )
            )
            run_start = None

    for i, idx in enumerate(tags):
        tag = tagset.tags[idx]
        if tag == OUTSIDE:
            close(i - 1)
            continue
        prefix, _, etype = tag.partition("-")
        if prefix == "B" or run_start is None or etype != run_type:
            close(i - 1)
            run_start = i
            run_type = etype
    close(len(tags) - 1)
    return mentions

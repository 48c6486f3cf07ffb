"""Corpus model: samples, mentions, tokenization, and the file formats.

Offsets are character-based, 0-indexed, end-exclusive, into the sample's
own text. Mentions compare as plain value tuples so prediction sets have
exact set semantics.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import ParseError

# Words and single punctuation marks; together the matches tile every
# non-whitespace character of the input.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

PredictionSet = set["Mention"]


@dataclass(frozen=True, slots=True)
class Mention:
    """One predicted or gold entity: (sample_id, entity_type, begin, end)."""

    sample_id: str
    entity_type: str
    begin: int
    end: int

    def __post_init__(self) -> None:
        if not self.sample_id:
            raise ValueError("mention sample_id must be non-empty")
        if not self.entity_type:
            raise ValueError("mention entity_type must be non-empty")
        if not (0 <= self.begin < self.end):
            raise ValueError(
                f"mention offsets must satisfy 0 <= begin < end, got ({self.begin}, {self.end})"
            )

    def overlaps(self, other: "Mention") -> bool:
        return self.sample_id == other.sample_id and self.begin < other.end and other.begin < self.end


@dataclass(frozen=True, slots=True)
class TokenSpan:
    """Character span of one token, end-exclusive."""

    begin: int
    end: int

    def __post_init__(self) -> None:
        if not (0 <= self.begin < self.end):
            raise ValueError(f"token span must satisfy 0 <= begin < end, got ({self.begin}, {self.end})")


@dataclass(frozen=True, slots=True)
class ContextWindow:
    """Records how a sample's text was extended with document context."""

    left_text: str
    right_text: str
    core_begin: int
    core_end: int

    def __post_init__(self) -> None:
        if self.core_begin != len(self.left_text):
            raise ValueError("core_begin must equal len(left_text)")
        if self.core_end < self.core_begin:
            raise ValueError("core_end must not precede core_begin")


@dataclass(frozen=True)
class Sample:
    """One text with its tokenization, gold mentions, and optional window.

    Gold mentions may overlap; tagging-scheme constraints are enforced by
    the codecs that need them, not here.
    """

    id: str
    text: str
    tokens: tuple[TokenSpan, ...]
    gold: frozenset[Mention] = field(default_factory=frozenset)
    window: ContextWindow | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("sample id must be non-empty")
        prev_end = 0
        for ts in self.tokens:
            if ts.begin < prev_end:
                raise ValueError(f"sample {self.id!r}: token spans must be sorted and non-overlapping")
            if ts.end > len(self.text):
                raise ValueError(f"sample {self.id!r}: token span {ts} exceeds text length")
            prev_end = ts.end
        for m in self.gold:
            if m.sample_id != self.id:
                raise ValueError(f"sample {self.id!r}: gold mention carries foreign id {m.sample_id!r}")
            if m.end > len(self.text):
                raise ValueError(f"sample {self.id!r}: gold mention {m} ends past the text")
        if self.window is not None and self.window.core_end > len(self.text):
            raise ValueError(f"sample {self.id!r}: window core exceeds text length")

    def token_texts(self) -> list[str]:
        return [self.text[t.begin:t.end] for t in self.tokens]


def tokenize(text: str) -> tuple[TokenSpan, ...]:
    """Split text into word and punctuation tokens with character spans."""
    return tuple(TokenSpan(m.start(), m.end()) for m in _TOKEN_RE.finditer(text))


def make_sample(
    sample_id: str,
    text: str,
    gold: frozenset[Mention] | set[Mention] = frozenset(),
    tokens: tuple[TokenSpan, ...] | None = None,
) -> Sample:
    """Build a sample, tokenizing with the built-in tokenizer if needed."""
    return Sample(
        id=sample_id,
        text=text,
        tokens=tokenize(text) if tokens is None else tokens,
        gold=frozenset(gold),
    )


def _sample_from_json(obj: dict, path: str, line_no: int) -> Sample:
    try:
        sample_id = obj["id"]
        text = obj["text"]
    except KeyError as exc:
        raise ParseError(path, line_no, f"missing required field {exc.args[0]!r}") from None
    if not isinstance(sample_id, str) or not isinstance(text, str):
        raise ParseError(path, line_no, "'id' and 'text' must be strings")

    if "tokens" in obj and obj["tokens"] is not None:
        try:
            tokens = tuple(TokenSpan(int(b), int(e)) for b, e in obj["tokens"])
        except (TypeError, ValueError) as exc:
            raise ParseError(path, line_no, f"bad token span: {exc}") from None
    else:
        tokens = tokenize(text)

    gold: set[Mention] = set()
    for triple in obj.get("gold") or []:
        try:
            etype, begin, end = triple
            gold.add(Mention(sample_id, str(etype), int(begin), int(end)))
        except (TypeError, ValueError) as exc:
            raise ParseError(path, line_no, f"bad gold mention {triple!r}: {exc}") from None

    try:
        return Sample(id=sample_id, text=text, tokens=tokens, gold=frozenset(gold))
    except ValueError as exc:
        raise ParseError(path, line_no, str(exc)) from None


def _load_jsonl(path: str) -> list[Sample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(path, line_no, "each line must hold a JSON object")
            samples.append(_sample_from_json(obj, path, line_no))
    return samples


def _flush_tsv_sentence(
    sample_id: str, forms: list[str], tags: list[str], path: str, line_no: int
) -> Sample:
    text = " ".join(forms)
    spans = []
    pos = 0
    for form in forms:
        spans.append(TokenSpan(pos, pos + len(form)))
        pos += len(form) + 1
    # Decode the tag column into mentions: a run is B-t followed by I-t;
    # a stray I-t opens a run as well.
    gold: set[Mention] = set()
    run_start: int | None = None
    run_type = ""
    for i, tag in enumerate(tags + ["O"]):
        if tag != "O" and "-" not in tag:
            raise ParseError(path, line_no, f"malformed tag {tag!r} in sentence {sample_id!r}")
        prefix, _, etype = tag.partition("-")
        starts_new = prefix == "B" or (prefix == "I" and (run_start is None or etype != run_type))
        if run_start is not None and (tag == "O" or starts_new):
            gold.add(Mention(sample_id, run_type, spans[run_start].begin, spans[i - 1].end))
            run_start = None
        if starts_new:
            run_start = i
            run_type = etype
    return Sample(id=sample_id, text=text, tokens=tuple(spans), gold=frozenset(gold))


def _load_tsv_tokens(path: str) -> list[Sample]:
    """Two-column token/tag sentences separated by blank lines.

    An optional `# id = <id>` comment before a sentence sets its id;
    otherwise ids are s0, s1, ... in file order.
    """
    samples = []
    forms: list[str] = []
    tags: list[str] = []
    pending_id: str | None = None
    auto_id = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                m = re.match(r"#\s*id\s*=\s*(\S+)", line)
                if m:
                    pending_id = m.group(1)
                continue
            if not line.strip():
                if forms:
                    sid = pending_id if pending_id is not None else f"s{auto_id}"
                    samples.append(_flush_tsv_sentence(sid, forms, tags, path, line_no))
                    auto_id += 1
                    forms, tags, pending_id = [], [], None
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ParseError(path, line_no, f"expected 2 tab-separated columns, got {len(cols)}")
            if not cols[0]:
                raise ParseError(path, line_no, "empty token form")
            forms.append(cols[0])
            tags.append(cols[1])
    if forms:
        sid = pending_id if pending_id is not None else f"s{auto_id}"
        samples.append(_flush_tsv_sentence(sid, forms, tags, path, line_no + 1))
    return samples


def load_samples(path: str, format: str = "jsonl") -> list[Sample]:
    """Load a corpus file in `jsonl` or `tsv-tokens` format."""
    if format == "jsonl":
        return _load_jsonl(path)
    if format == "tsv-tokens":
        return _load_tsv_tokens(path)
    raise ValueError(f"unknown corpus format {format!r}")


def write_samples(path: str, samples: list[Sample]) -> None:
    """Write samples as JSONL, one object per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            obj = {
                "id": s.id,
                "text": s.text,
                "tokens": [[t.begin, t.end] for t in s.tokens],
                "gold": [[m.entity_type, m.begin, m.end] for m in sorted_mentions(s.gold)],
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def apply_window(sample: Sample, doc_context: str, size: int, core_at: int | None = None) -> Sample:
    """Extend a sample with up to `size` characters of document context.

    `doc_context` must contain the sample text; `core_at` gives its offset
    and defaults to the first occurrence. Gold mentions are re-based into
    the windowed coordinates and tokens are recomputed over the new text.
    """
    if size < 0:
        raise ValueError(f"window size must be >= 0, got {size}")
    if core_at is None:
        core_at = doc_context.find(sample.text)
        if core_at < 0:
            raise ValueError(f"sample {sample.id!r}: text not found in document context")
    elif doc_context[core_at:core_at + len(sample.text)] != sample.text:
        raise ValueError(f"sample {sample.id!r}: document context does not match text at offset {core_at}")

    left = doc_context[max(0, core_at - size):core_at]
    right = doc_context[core_at + len(sample.text):core_at + len(sample.text) + size]
    text = left + sample.text + right
    shift = len(left)
    gold = frozenset(
        Mention(m.sample_id, m.entity_type, m.begin + shift, m.end + shift) for m in sample.gold
    )
    window = ContextWindow(left, right, shift, shift + len(sample.text))
    return Sample(id=sample.id, text=text, tokens=tokenize(text), gold=gold, window=window)


def restrict_to_core(preds: PredictionSet, sample: Sample) -> PredictionSet:
    """Drop mentions outside the window core and re-base the rest.

    Only mentions fully inside [core_begin, core_end) survive; offsets come
    back in the original, unwindowed coordinates.
    """
    if sample.window is None:
        raise ValueError(f"sample {sample.id!r} has no context window")
    cb, ce = sample.window.core_begin, sample.window.core_end
    return {
        Mention(m.sample_id, m.entity_type, m.begin - cb, m.end - cb)
        for m in preds
        if m.begin >= cb and m.end <= ce
    }


def sorted_mentions(preds: PredictionSet | frozenset[Mention]) -> list[Mention]:
    """Canonical deterministic ordering for serialization and sampling."""
    return sorted(preds, key=lambda m: (m.sample_id, m.begin, m.end, m.entity_type))


def read_predictions(path: str) -> PredictionSet:
    """Read a prediction TSV: sample_id, entity_type, begin, end per line."""
    preds: PredictionSet = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise ParseError(path, line_no, f"expected 4 tab-separated columns, got {len(cols)}")
            try:
                begin, end = int(cols[2]), int(cols[3])
            except ValueError:
                raise ParseError(path, line_no, f"non-integer offsets {cols[2]!r}, {cols[3]!r}") from None
            try:
                preds.add(Mention(cols[0], cols[1], begin, end))
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
    return preds


def write_predictions(path: str, preds: PredictionSet | frozenset[Mention]) -> None:
    """Write a prediction TSV in canonical order, UTF-8 with \\n newlines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for m in sorted_mentions(preds):
            for field_value in (m.sample_id, m.entity_type):
                if "\t" in field_value or "\n" in field_value:
                    raise ValueError(f"cannot serialize field {field_value!r} containing tab or newline")
            fh.write(f"{m.sample_id}\t{m.entity_type}\t{m.begin}\t{m.end}\n")

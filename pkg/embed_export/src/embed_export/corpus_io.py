"""Reader for the corpus JSONL interchange format.

One object per line with `id`, `text`, and `tokens` as `[begin, end]`
character spans, end-exclusive and ascending. Gold annotations may be
present but the exporter does not use them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import CorpusError


@dataclass(frozen=True)
class CorpusSample:
    id: str
    text: str
    tokens: tuple[tuple[int, int], ...]


def read_corpus(path: str) -> list[CorpusSample]:
    samples: list[CorpusSample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                sample = CorpusSample(
                    id=str(obj["id"]),
                    text=str(obj["text"]),
                    tokens=tuple((int(b), int(e)) for b, e in obj["tokens"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{line_no}: bad sample record: {exc}") from None
            _validate(sample, path, line_no)
            if sample.id in seen:
                raise CorpusError(f"{path}:{line_no}: duplicate sample id {sample.id!r}")
            seen.add(sample.id)
            samples.append(sample)
    if not samples:
        raise CorpusError(f"{path}: corpus is empty")
    return samples


def _validate(sample: CorpusSample, path: str, line_no: int) -> None:
    last_end = 0
    for k, (b, e) in enumerate(sample.tokens):
        if not (0 <= b < e <= len(sample.text)):
            raise CorpusError(
                f"{path}:{line_no}: sample {sample.id!r} token {k} span ({b}, {e}) "
                f"is outside the text"
            )
        if b < last_end:
            raise CorpusError(
                f"{path}:{line_no}: sample {sample.id!r} token {k} overlaps its predecessor"
            )
        last_end = e

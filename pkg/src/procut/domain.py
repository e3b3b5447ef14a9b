"""Core data model: templates, segments, masks, examples, rendering.

Placeholder syntax is single curly braces ``{name}``; literal braces are
escaped by doubling (``{{`` / ``}}``). All types here are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import (
    EmptyMask,
    EmptyTemplate,
    MissingInput,
    ProcutError,
    UnbalancedBraces,
)

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _scan(text: str):
    """Yield (kind, start, end, payload) tokens over `text`.

    kind is one of "text", "placeholder", "lbrace", "rbrace"; placeholders
    carry their name, escaped braces their literal character.
    """
    i, n = 0, len(text)
    plain_start = i
    while i < n:
        c = text[i]
        if c == "{":
            if text.startswith("{{", i):
                if plain_start < i:
                    yield ("text", plain_start, i, text[plain_start:i])
                yield ("lbrace", i, i + 2, "{")
                i += 2
                plain_start = i
                continue
            m = _NAME_RE.match(text, i + 1)
            if m and m.end() < n and text[m.end()] == "}":
                if plain_start < i:
                    yield ("text", plain_start, i, text[plain_start:i])
                yield ("placeholder", i, m.end() + 1, m.group())
                i = m.end() + 1
                plain_start = i
                continue
            raise UnbalancedBraces(f"opening brace at offset {i} has no matching close")
        if c == "}":
            if text.startswith("}}", i):
                if plain_start < i:
                    yield ("text", plain_start, i, text[plain_start:i])
                yield ("rbrace", i, i + 2, "}")
                i += 2
                plain_start = i
                continue
            raise UnbalancedBraces(f"closing brace at offset {i} has no matching open")
        i += 1
    if plain_start < n:
        yield ("text", plain_start, n, text[plain_start:n])


def placeholder_names(text: str) -> list[str]:
    """Ordered, de-duplicated placeholder inventory of `text`."""
    seen: list[str] = []
    for kind, _, _, payload in _scan(text):
        if kind == "placeholder" and payload not in seen:
            seen.append(payload)
    return seen


def placeholder_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) offsets of every placeholder occurrence."""
    return [(s, e) for kind, s, e, _ in _scan(text) if kind == "placeholder"]


def substitute(text: str, inputs: dict[str, str]) -> str:
    """Fill placeholders from `inputs` and unescape doubled braces."""
    out: list[str] = []
    for kind, _, _, payload in _scan(text):
        if kind == "placeholder":
            if payload not in inputs:
                raise MissingInput(payload)
            out.append(inputs[payload])
        else:
            out.append(payload)
    return "".join(out)


@dataclass(frozen=True)
class PromptTemplate:
    raw_text: str
    placeholders: tuple[str, ...]

    def __post_init__(self):
        if not self.raw_text:
            raise EmptyTemplate("template text is empty")


def parse_template(raw: str) -> PromptTemplate:
    """Parse raw template text, extracting the placeholder inventory."""
    if not raw:
        raise EmptyTemplate("template text is empty")
    return PromptTemplate(raw_text=raw, placeholders=tuple(placeholder_names(raw)))


class SegmentationStrategy(str, Enum):
    predefined = "predefined"
    structural = "structural"
    llm = "llm"


@dataclass(frozen=True)
class Segment:
    index: int
    text: str
    pinned: bool = False
    contains_placeholders: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text:
            raise ProcutError(f"segment {self.index} has empty text")


@dataclass(frozen=True)
class SegmentedTemplate:
    segments: tuple[Segment, ...]
    source: PromptTemplate
    strategy: SegmentationStrategy

    def __post_init__(self):
        joined = "".join(s.text for s in self.segments)
        if joined != self.source.raw_text:
            raise ProcutError("segments do not reconstruct the source template")
        for i, seg in enumerate(self.segments):
            if seg.index != i:
                raise ProcutError("segment indices must be 0..M-1 in order")
        # every placeholder occurrence must sit inside exactly one segment
        offsets = []
        pos = 0
        for seg in self.segments:
            offsets.append((pos, pos + len(seg.text)))
            pos += len(seg.text)
        for start, end in placeholder_spans(self.source.raw_text):
            if not any(start >= a and end <= b for a, b in offsets):
                raise ProcutError("placeholder split across segment boundary")

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    @staticmethod
    def from_texts(
        texts: Sequence[str],
        strategy: SegmentationStrategy,
        source: PromptTemplate | None = None,
    ) -> "SegmentedTemplate":
        raw = "".join(texts)
        src = source if source is not None else parse_template(raw)
        segments = tuple(
            Segment(
                index=i,
                text=t,
                contains_placeholders=tuple(placeholder_names(t)),
            )
            for i, t in enumerate(texts)
        )
        return SegmentedTemplate(segments=segments, source=src, strategy=strategy)


@dataclass(frozen=True)
class Mask:
    bits: tuple[bool, ...]

    def __post_init__(self):
        if not self.bits:
            raise ProcutError("mask must have at least one bit")

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def popcount(self) -> int:
        return sum(self.bits)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b)

    def with_bit(self, index: int, value: bool) -> "Mask":
        bits = list(self.bits)
        bits[index] = value
        return Mask(tuple(bits))

    def to_list(self) -> list[int]:
        return [int(b) for b in self.bits]

    @staticmethod
    def from_list(bits: Iterable[int | bool]) -> "Mask":
        return Mask(tuple(bool(b) for b in bits))

    @staticmethod
    def full(m: int) -> "Mask":
        return Mask((True,) * m)

    @staticmethod
    def empty(m: int) -> "Mask":
        return Mask((False,) * m)

    @staticmethod
    def from_indices(m: int, indices: Iterable[int]) -> "Mask":
        keep = set(indices)
        return Mask(tuple(i in keep for i in range(m)))


@dataclass(frozen=True)
class EvalExample:
    inputs: dict[str, str] = field(default_factory=dict)
    reference: str = ""

    def __post_init__(self):
        # freeze a defensive copy so shared examples cannot be mutated
        object.__setattr__(self, "inputs", dict(self.inputs))


class MetricId(str, Enum):
    exact_match = "exact_match"
    token_f1 = "token_f1"


@dataclass(frozen=True)
class EvalTask:
    train: tuple[EvalExample, ...]
    test: tuple[EvalExample, ...]
    metric: MetricId

    def split(self, name: str) -> tuple[EvalExample, ...]:
        if name == "train":
            return self.train
        if name == "test":
            return self.test
        raise ProcutError(f"unknown split {name!r}")


def render(seg: SegmentedTemplate, mask: Mask, ex: EvalExample) -> str:
    """Render the masked template with the example's inputs.

    Placeholders in excluded segments are silently dropped with their
    segment; a missing input for an included placeholder is an error.
    """
    if len(mask) != seg.num_segments:
        raise ProcutError(
            f"mask length {len(mask)} != segment count {seg.num_segments}"
        )
    if mask.popcount == 0:
        raise EmptyMask("mask excludes every segment")
    parts = [
        substitute(s.text, ex.inputs)
        for s, keep in zip(seg.segments, mask.bits)
        if keep
    ]
    return "".join(parts)


# --- token counting ---------------------------------------------------------

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def _default_counter(text: str) -> int:
    # maximal non-whitespace runs, split further at punctuation boundaries:
    # each word run is one token, each punctuation character its own token
    return len(_TOKEN_RE.findall(text))


_TOKEN_COUNTERS: dict[str, Callable[[str], int]] = {"default": _default_counter}


def register_token_counter(name: str, fn: Callable[[str], int]) -> None:
    _TOKEN_COUNTERS[name] = fn


def count_tokens(text: str, counter: str = "default") -> int:
    return _TOKEN_COUNTERS[counter](text)


# --- dataset files ----------------------------------------------------------


def load_examples(path: str | Path) -> list[EvalExample]:
    """Read a JSON-lines dataset: {"inputs": {...}, "reference": "..."} per line."""
    examples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProcutError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
        examples.append(
            EvalExample(inputs=obj.get("inputs", {}), reference=obj.get("reference", ""))
        )
    return examples

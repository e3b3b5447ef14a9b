"""Template segmentation: predefined markers, structural boundaries, LLM-driven."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .domain import (
    PromptTemplate,
    SegmentationStrategy,
    SegmentedTemplate,
    placeholder_names,
    placeholder_spans,
    substitute,
)
from .errors import EmptyTemplate, GatewayError, MalformedResponse, ProcutError
from .gateway import CompletionRequest, Gateway, extract_json

DEFAULT_MARKER = "---SEGMENT---"
DEFAULT_MAX_UNITS = 8
DEFAULT_RETRY_LIMIT = 2


@dataclass(frozen=True)
class SegmentationConfig:
    strategy: SegmentationStrategy = SegmentationStrategy.structural
    max_units: int = DEFAULT_MAX_UNITS
    marker: str = DEFAULT_MARKER
    retry_limit: int = DEFAULT_RETRY_LIMIT
    model: str = "default"

    def __post_init__(self):
        if self.max_units < 1:
            raise ProcutError("max_units must be >= 1")


def _load_resource(name: str) -> str:
    return resources.files("procut.resources").joinpath(name).read_text("utf-8")


def segment_predefined(t: PromptTemplate, marker: str = DEFAULT_MARKER) -> SegmentedTemplate:
    """Split at marker lines; markers are delimiters, not content."""
    if not marker:
        raise ProcutError("marker must be non-empty")
    pattern = re.compile(rf"(?m)^{re.escape(marker)}$")
    pieces = [p for p in pattern.split(t.raw_text) if p]
    if not pieces:
        raise EmptyTemplate("template contains only markers")
    # the source is redefined as the marker-stripped text
    return SegmentedTemplate.from_texts(pieces, SegmentationStrategy.predefined)


def _boundary_candidates(raw: str) -> list[int]:
    """Paragraph and sentence boundary offsets; trailing whitespace attaches
    to the preceding unit, so a boundary sits after the whitespace run."""
    forbidden = placeholder_spans(raw)
    candidates = set()
    for m in re.finditer(r"\n\s*\n\s*", raw):
        candidates.add(m.end())
    for m in re.finditer(r"[.?!]+\s+", raw):
        candidates.add(m.end())
    out = []
    for b in sorted(candidates):
        if b <= 0 or b >= len(raw):
            continue
        if any(s < b < e for s, e in forbidden):
            continue
        out.append(b)
    return out


def segment_structural(t: PromptTemplate, max_units: int = DEFAULT_MAX_UNITS) -> SegmentedTemplate:
    """Cut at paragraph then sentence boundaries, never inside a placeholder;
    greedily merge adjacent units from the end until the unit bound holds."""
    if max_units < 1:
        raise ProcutError("max_units must be >= 1")
    raw = t.raw_text
    bounds = _boundary_candidates(raw)
    units = []
    prev = 0
    for b in bounds:
        units.append(raw[prev:b])
        prev = b
    units.append(raw[prev:])
    units = [u for u in units if u]
    while len(units) > max_units:
        tail = units.pop()
        units[-1] = units[-1] + tail
    return SegmentedTemplate.from_texts(units, SegmentationStrategy.structural, source=t)


def _validate_units(units: list[str], t: PromptTemplate, max_units: int) -> bool:
    if not units or any(not u for u in units):
        return False
    if len(units) > max_units:
        return False
    if "".join(units) != t.raw_text:
        return False
    for u in units:
        try:
            placeholder_names(u)  # raises if a placeholder is split
        except ProcutError:
            return False
    return True


def segment_llm(
    t: PromptTemplate,
    max_units: int,
    gw: Gateway,
    retry_limit: int = DEFAULT_RETRY_LIMIT,
    model: str = "default",
) -> SegmentedTemplate:
    """Ask the LLM to partition the template; output is never trusted.

    Each candidate partition is validated for exact reconstruction and
    placeholder integrity; after `retry_limit` failed attempts the
    structural strategy is used as a fallback.
    """
    instruction = _load_resource("segmentation_prompt.txt")
    prompt = substitute(
        instruction,
        {"current_prompt": t.raw_text, "max_units": str(max_units)},
    )
    req = CompletionRequest(model=model, prompt=prompt)
    for attempt in range(retry_limit + 1):
        try:
            completion = gw.complete(req, phase="segmentation", use_cache=attempt == 0)
        except GatewayError:
            raise
        try:
            payload = extract_json(completion)
            units = [u["template"] for u in payload["units"]]
        except (MalformedResponse, KeyError, TypeError):
            continue
        if not isinstance(units, list) or not all(isinstance(u, str) for u in units):
            continue
        if _validate_units(units, t, max_units):
            return SegmentedTemplate.from_texts(
                units, SegmentationStrategy.llm, source=t
            )
    return segment_structural(t, max_units)


def segment(
    t: PromptTemplate,
    config: SegmentationConfig,
    gw: Gateway | None = None,
) -> SegmentedTemplate:
    """Dispatch on the configured strategy."""
    if config.strategy == SegmentationStrategy.predefined:
        return segment_predefined(t, config.marker)
    if config.strategy == SegmentationStrategy.structural:
        return segment_structural(t, config.max_units)
    if gw is None:
        raise GatewayError("llm segmentation requires a configured gateway")
    return segment_llm(
        t, config.max_units, gw, retry_limit=config.retry_limit, model=config.model
    )

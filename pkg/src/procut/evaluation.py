"""Task metrics, answer extraction, masked-template evaluation, and NDCG."""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Callable

from .domain import EvalTask, Mask, MetricId, SegmentedTemplate, render
from .errors import DegenerateGold, EmptyMask, ProcutError
from .gateway import CompletionRequest, Gateway

DEFAULT_ANSWER_TAG = "answer"

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation and articles, collapse whitespace."""
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(reference: str, prediction: str) -> float:
    return float(normalize_answer(reference) == normalize_answer(prediction))


def token_f1(reference: str, prediction: str) -> float:
    ref_tokens = normalize_answer(reference).split()
    pred_tokens = normalize_answer(prediction).split()
    if not ref_tokens and not pred_tokens:
        return 1.0
    if not ref_tokens or not pred_tokens:
        return 0.0
    common = Counter(ref_tokens) & Counter(pred_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(ref_tokens)
    return 2 * precision * recall / (precision + recall)


_METRICS: dict[MetricId, Callable[[str, str], float]] = {
    MetricId.exact_match: exact_match,
    MetricId.token_f1: token_f1,
}


def score(metric: MetricId, reference: str, prediction: str) -> float:
    return _METRICS[MetricId(metric)](reference, prediction)


def extract_answer(completion: str, tag: str = DEFAULT_ANSWER_TAG) -> str:
    """Content of the first <tag>...</tag> pair; whole completion if absent."""
    m = re.search(rf"<{re.escape(tag)}>(.*?)</{re.escape(tag)}>", completion, re.DOTALL)
    return m.group(1) if m else completion


@dataclass(frozen=True)
class MaskScore:
    mask: Mask
    mean_score: float
    n_examples: int
    split: str


def evaluate_mask(
    seg: SegmentedTemplate,
    mask: Mask,
    task: EvalTask,
    split: str,
    gw: Gateway,
    model: str = "default",
    answer_tag: str = DEFAULT_ANSWER_TAG,
    parallelism: int | None = None,
) -> MaskScore:
    """Mean metric value of the masked template over a dataset split."""
    if mask.popcount == 0:
        raise EmptyMask("cannot evaluate an all-zero mask")
    examples = task.split(split)
    if not examples:
        raise ProcutError(f"split {split!r} is empty")
    reqs = [
        CompletionRequest(model=model, prompt=render(seg, mask, ex))
        for ex in examples
    ]
    completions = gw.batch_complete(reqs, parallelism=parallelism, phase="evaluation")
    scores = [
        score(task.metric, ex.reference, extract_answer(out, answer_tag))
        for ex, out in zip(examples, completions)
    ]
    return MaskScore(
        mask=mask,
        mean_score=sum(scores) / len(scores),
        n_examples=len(scores),
        split=split,
    )


class MemoizedValue:
    """Memoizing wrapper around a mask value function.

    Tracks distinct mask evaluations (the estimator call budget) and keeps
    a probe log of (mask bits, score) pairs in evaluation order.
    """

    def __init__(self, fn: Callable[[Mask], float]):
        self.fn = fn
        self._cache: dict[tuple[bool, ...], float] = {}
        self.log: list[tuple[tuple[int, ...], float]] = []

    def __call__(self, mask: Mask) -> float:
        key = mask.bits
        if key not in self._cache:
            value = self.fn(mask)
            self._cache[key] = value
            self.log.append((tuple(mask.to_list()), value))
        return self._cache[key]

    @property
    def n_evals(self) -> int:
        return len(self._cache)


def make_value_fn(
    seg: SegmentedTemplate,
    task: EvalTask,
    split: str,
    gw: Gateway,
    model: str = "default",
    answer_tag: str = DEFAULT_ANSWER_TAG,
) -> MemoizedValue:
    """v(mask) = evaluate_mask(...).mean_score; the empty mask scores 0."""

    def value(mask: Mask) -> float:
        if mask.popcount == 0:
            return 0.0
        return evaluate_mask(
            seg, mask, task, split, gw, model=model, answer_tag=answer_tag
        ).mean_score

    return MemoizedValue(value)


def ndcg(estimated, gold) -> float:
    """Ranking fidelity of estimated attribution scores against gold scores.

    Relevance of segment j is gold_j - min(gold); items are ranked by
    estimated score (descending, ties by segment index) and discounted by
    log2(position + 1).
    """
    est = list(getattr(estimated, "scores", estimated))
    ref = list(getattr(gold, "scores", gold))
    if len(est) != len(ref):
        raise ProcutError(f"score lengths differ: {len(est)} vs {len(ref)}")
    lo = min(ref)
    rel = [g - lo for g in ref]
    if all(r == 0 for r in rel):
        raise DegenerateGold("gold scores are all equal")
    order = sorted(range(len(est)), key=lambda j: (-est[j], j))
    dcg = sum(rel[j] / math.log2(pos + 2) for pos, j in enumerate(order))
    ideal = sum(r / math.log2(pos + 2) for pos, r in enumerate(sorted(rel, reverse=True)))
    return dcg / ideal

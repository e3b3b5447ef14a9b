"""End-to-end compression orchestration: segment, attribute, prune, report."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .attribution import (
    AttributionResult,
    brute_force_best,
    greedy_forward,
    lasso_attribution,
    llm_ranker,
    loo,
    random_attribution,
    shap_exact,
    shap_mc,
)
from .domain import (
    EvalTask,
    Mask,
    PromptTemplate,
    SegmentedTemplate,
    count_tokens,
    parse_template,
)
from .errors import PlaceholderLost, ProcutError
from .evaluation import evaluate_mask, make_value_fn
from .gateway import CompletionRequest, Gateway
from .segmentation import SegmentationConfig, segment

ESTIMATORS = ("shap_exact", "shap_mc", "loo", "lasso", "greedy", "llm_ranker", "random")

STAGES = ("queued", "segmenting", "attributing", "pruning", "evaluating", "done")


@dataclass(frozen=True)
class CompressionConfig:
    ratio: float = 0.5
    estimator: str = "shap_exact"
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    pinned_indices: frozenset[int] = frozenset()
    seed: int = 0
    probe_split: str = "train"
    report_split: str = "test"
    model: str = "default"
    answer_tag: str = "answer"
    estimator_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.ratio <= 1:
            raise ProcutError("ratio must be in [0, 1]")
        if self.estimator not in ESTIMATORS:
            raise ProcutError(f"unknown estimator {self.estimator!r}")

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "estimator": self.estimator,
            "segmentation": {
                "strategy": self.segmentation.strategy.value,
                "max_units": self.segmentation.max_units,
                "marker": self.segmentation.marker,
            },
            "pinned_indices": sorted(self.pinned_indices),
            "seed": self.seed,
            "probe_split": self.probe_split,
            "report_split": self.report_split,
            "model": self.model,
            "answer_tag": self.answer_tag,
            "estimator_options": dict(sorted(self.estimator_options.items())),
        }


def compute_run_id(template_text: str, config: CompressionConfig) -> str:
    payload = json.dumps(
        {"template": template_text, "config": config.to_dict()},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class RunReport:
    run_id: str
    status: str  # "ok" | "failed"
    original_template: str
    compressed_template: str
    kept_mask: tuple[int, ...]
    attribution: AttributionResult | None
    score_before: float | None
    score_after: float | None
    tokens_before: int
    tokens_after: int
    ledger: dict
    config: dict
    started_at: float
    finished_at: float
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "status": self.status,
            "original_template": self.original_template,
            "compressed_template": self.compressed_template,
            "kept_mask": list(self.kept_mask),
            "attribution": self.attribution.to_dict() if self.attribution else None,
            "score_before": self.score_before,
            "score_after": self.score_after,
            "tokens_before": self.tokens_before,
            "tokens_after": self.tokens_after,
            "ledger": self.ledger,
            "config": self.config,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "error": self.error,
        }

    @staticmethod
    def from_dict(obj: dict) -> "RunReport":
        attr = obj.get("attribution")
        return RunReport(
            run_id=obj["run_id"],
            status=obj["status"],
            original_template=obj["original_template"],
            compressed_template=obj["compressed_template"],
            kept_mask=tuple(obj["kept_mask"]),
            attribution=AttributionResult.from_dict(attr) if attr else None,
            score_before=obj.get("score_before"),
            score_after=obj.get("score_after"),
            tokens_before=obj["tokens_before"],
            tokens_after=obj["tokens_after"],
            ledger=obj.get("ledger", {}),
            config=obj.get("config", {}),
            started_at=obj.get("started_at", 0.0),
            finished_at=obj.get("finished_at", 0.0),
            error=obj.get("error"),
        )

    def save(self, runs_dir: str | Path) -> Path:
        runs_dir = Path(runs_dir)
        runs_dir.mkdir(parents=True, exist_ok=True)
        path = runs_dir / f"{self.run_id}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(
            json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2),
            encoding="utf-8",
        )
        tmp.replace(path)
        return path


def prune(
    seg: SegmentedTemplate,
    attr: AttributionResult,
    r: float,
    pinned: frozenset[int] | set[int] = frozenset(),
) -> tuple[SegmentedTemplate, Mask]:
    """Keep the top floor(r*M) segments by score, in original order.

    Pinned segments always survive; k grows to |pinned| when necessary.
    Ties break toward the lower original index. k never drops below 1.
    """
    m = seg.num_segments
    if len(attr.scores) != m:
        raise ProcutError(f"attribution length {len(attr.scores)} != {m} segments")
    if not 0 <= r <= 1:
        raise ProcutError("ratio must be in [0, 1]")
    pinned = frozenset(pinned)
    if any(i < 0 or i >= m for i in pinned):
        raise ProcutError("pinned index out of range")
    k = max(math.floor(r * m), len(pinned), 1)
    keep = set(pinned)
    candidates = sorted(
        (j for j in range(m) if j not in pinned),
        key=lambda j: (-attr.scores[j], j),
    )
    for j in candidates:
        if len(keep) >= k:
            break
        keep.add(j)
    mask = Mask.from_indices(m, keep)
    kept_texts = [s.text for s, b in zip(seg.segments, mask.bits) if b]
    compressed = SegmentedTemplate.from_texts(kept_texts, seg.strategy)
    return compressed, mask


def _run_attribution(
    seg: SegmentedTemplate,
    task: EvalTask,
    config: CompressionConfig,
    gw: Gateway,
) -> AttributionResult:
    m = seg.num_segments
    opts = dict(config.estimator_options)
    v = make_value_fn(
        seg, task, config.probe_split, gw,
        model=config.model, answer_tag=config.answer_tag,
    )
    name = config.estimator
    if name == "shap_exact":
        return shap_exact(v, m, **opts)
    if name == "shap_mc":
        return shap_mc(v, m, seed=config.seed, **opts)
    if name == "loo":
        return loo(v, m)
    if name == "lasso":
        return lasso_attribution(v, m, seed=config.seed, **opts)
    if name == "greedy":
        return greedy_forward(v, m)
    if name == "llm_ranker":
        t = int(opts.pop("t", 2))
        k = int(opts.pop("k", max(math.floor(config.ratio * m), 1)))
        return llm_ranker(
            seg, task, gw, t=t, k=min(k, m),
            model=config.model, split=config.probe_split,
            answer_tag=config.answer_tag, **opts,
        )
    if name == "random":
        return random_attribution(m, seed=config.seed)
    raise ProcutError(f"unknown estimator {name!r}")


def run_procut(
    template: PromptTemplate | str,
    task: EvalTask,
    config: CompressionConfig,
    gw: Gateway,
    runs_dir: str | Path | None = None,
    on_stage: Callable[[str, float], None] | None = None,
) -> RunReport:
    """Segment, attribute, prune, then evaluate before/after on the report split."""
    t = parse_template(template) if isinstance(template, str) else template
    run_id = compute_run_id(t.raw_text, config)
    started = gw.clock()
    stage = lambda name, p: on_stage and on_stage(name, p)
    try:
        stage("segmenting", 0.05)
        seg = segment(t, config.segmentation, gw)
        stage("attributing", 0.2)
        attr = _run_attribution(seg, task, config, gw)
        stage("pruning", 0.7)
        compressed, mask = prune(seg, attr, config.ratio, config.pinned_indices)
        stage("evaluating", 0.8)
        before = evaluate_mask(
            seg, Mask.full(seg.num_segments), task, config.report_split, gw,
            model=config.model, answer_tag=config.answer_tag,
        )
        after = evaluate_mask(
            seg, mask, task, config.report_split, gw,
            model=config.model, answer_tag=config.answer_tag,
        )
        report = RunReport(
            run_id=run_id,
            status="ok",
            original_template=t.raw_text,
            compressed_template=compressed.source.raw_text,
            kept_mask=tuple(mask.to_list()),
            attribution=attr,
            score_before=before.mean_score,
            score_after=after.mean_score,
            # segmented source: predefined markers are delimiters, not content
            tokens_before=count_tokens(seg.source.raw_text),
            tokens_after=count_tokens(compressed.source.raw_text),
            ledger=_ledger_snapshot(gw),
            config=config.to_dict(),
            started_at=started,
            finished_at=gw.clock(),
        )
        stage("done", 1.0)
    except Exception as exc:
        report = RunReport(
            run_id=run_id,
            status="failed",
            original_template=t.raw_text,
            compressed_template="",
            kept_mask=(),
            attribution=None,
            score_before=None,
            score_after=None,
            tokens_before=count_tokens(t.raw_text),
            tokens_after=0,
            ledger=_ledger_snapshot(gw),
            config=config.to_dict(),
            started_at=started,
            finished_at=gw.clock(),
            error=f"{type(exc).__name__}: {exc}",
        )
        if runs_dir is not None:
            report.save(runs_dir)
        raise
    if runs_dir is not None:
        report.save(runs_dir)
    return report


def _ledger_snapshot(gw: Gateway) -> dict:
    with gw._lock:
        return gw.ledger.snapshot()


VANILLA_COMPRESS_INSTRUCTION = (
    "Rewrite the prompt template below so it keeps roughly {ratio_percent}% of "
    "its tokens while preserving its meaning and task behavior. Keep every "
    "placeholder (text in single curly braces) exactly as-is. Return only the "
    "rewritten template, nothing else.\n\n"
    "<template>\n{template}\n</template>"
)


def vanilla_llm_compress(
    template: PromptTemplate | str,
    r: float,
    gw: Gateway,
    model: str = "default",
    retry_limit: int = 2,
) -> PromptTemplate:
    """Baseline: one free-form LLM rewrite toward ~r of the original tokens.

    The rewrite must keep every placeholder; losing one is fatal after retries.
    """
    t = parse_template(template) if isinstance(template, str) else template
    if not 0 <= r <= 1:
        raise ProcutError("ratio must be in [0, 1]")
    if r == 1.0:
        return t
    prompt = VANILLA_COMPRESS_INSTRUCTION.format(
        ratio_percent=round(r * 100), template=t.raw_text
    )
    req = CompletionRequest(model=model, prompt=prompt)
    missing = ()
    for attempt in range(retry_limit + 1):
        completion = gw.complete(req, phase="segmentation", use_cache=attempt == 0)
        try:
            out = parse_template(completion)
        except ProcutError:
            missing = tuple(t.placeholders)
            continue
        missing = tuple(p for p in t.placeholders if p not in out.placeholders)
        if not missing:
            return out
    raise PlaceholderLost(f"compressed template lost placeholders {missing!r}")


@dataclass(frozen=True)
class TradeoffCurve:
    points: tuple[tuple[float, float, float], ...]  # (ratio, token_reduction, test_score)

    def to_dict(self) -> dict:
        return {
            "points": [
                {"ratio": r, "token_reduction": tr, "test_score": s}
                for r, tr, s in self.points
            ]
        }


def sweep(
    template: PromptTemplate | str,
    task: EvalTask,
    config: CompressionConfig,
    ratios: Sequence[float],
    gw: Gateway,
) -> TradeoffCurve:
    """One attribution pass reused across every requested ratio."""
    if not ratios:
        raise ProcutError("ratios must be non-empty")
    if any(not 0 <= r <= 1 for r in ratios):
        raise ProcutError("every ratio must be in [0, 1]")
    ratios = sorted(set(ratios))
    t = parse_template(template) if isinstance(template, str) else template
    seg = segment(t, config.segmentation, gw)
    attr = _run_attribution(seg, task, config, gw)
    tokens_before = count_tokens(seg.source.raw_text)
    points = []
    for r in ratios:
        compressed, mask = prune(seg, attr, r, config.pinned_indices)
        after = evaluate_mask(
            seg, mask, task, config.report_split, gw,
            model=config.model, answer_tag=config.answer_tag,
        )
        tokens_after = count_tokens(compressed.source.raw_text)
        reduction = 1.0 - tokens_after / tokens_before if tokens_before else 0.0
        points.append((r, reduction, after.mean_score))
    return TradeoffCurve(points=tuple(points))


def compress_in_loop(
    step: Callable[[PromptTemplate], PromptTemplate],
    template: PromptTemplate | str,
    task: EvalTask,
    config: CompressionConfig,
    iterations: int,
    gw: Gateway,
    runs_dir: str | Path | None = None,
) -> list[RunReport]:
    """Alternate an external optimizer step with a compression run.

    Each round feeds the previous round's compressed template to `step`,
    then compresses the grown template; reports trace the trajectory.
    """
    if iterations < 0:
        raise ProcutError("iterations must be >= 0")
    current = parse_template(template) if isinstance(template, str) else template
    reports = []
    for _ in range(iterations):
        current = step(current)
        report = run_procut(current, task, config, gw, runs_dir=runs_dir)
        reports.append(report)
        current = parse_template(report.compressed_template)
    return reports


__all__ = [
    "CompressionConfig",
    "RunReport",
    "TradeoffCurve",
    "brute_force_best",
    "compress_in_loop",
    "compute_run_id",
    "prune",
    "run_procut",
    "sweep",
    "vanilla_llm_compress",
]

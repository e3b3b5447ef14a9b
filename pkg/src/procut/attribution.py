"""Segment attribution estimators.

Every estimator consumes a value function v(mask) -> mean metric score and
returns an AttributionResult with per-segment scores, the distinct-mask
evaluation budget actually spent, and the probe log of (mask, score) pairs.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence

from .domain import EvalTask, Mask, SegmentedTemplate, substitute
from .errors import (
    AllZeroFit,
    DimensionMismatch,
    InvalidMaskShape,
    InvalidRanking,
    MalformedResponse,
    ProcutError,
    TooManySegments,
)
from .evaluation import MemoizedValue, evaluate_mask
from .gateway import CompletionRequest, Gateway, extract_json

EXACT_LIMIT = 12
DEFAULT_LAMBDA_GRID = (0.1, 0.05, 0.02, 0.01, 0.005, 0.001)
DEFAULT_P_INCLUDE = 0.5

ValueFn = Callable[[Mask], float]


@dataclass(frozen=True)
class AttributionResult:
    scores: tuple[float, ...]
    estimator: str
    rng_seed: int | None = None
    n_value_evals: int = 0
    n_meta_calls: int = 0
    probe_log: tuple[tuple[tuple[int, ...], float], ...] = ()
    ledger: dict | None = None
    detail: dict = field(default_factory=dict)

    @property
    def num_segments(self) -> int:
        return len(self.scores)

    def to_dict(self) -> dict:
        return {
            "scores": list(self.scores),
            "estimator": self.estimator,
            "rng_seed": self.rng_seed,
            "n_value_evals": self.n_value_evals,
            "n_meta_calls": self.n_meta_calls,
            "probe_log": [[list(bits), s] for bits, s in self.probe_log],
            "ledger": self.ledger,
            "detail": self.detail,
        }

    @staticmethod
    def from_dict(obj: dict) -> "AttributionResult":
        return AttributionResult(
            scores=tuple(obj["scores"]),
            estimator=obj.get("estimator", "unknown"),
            rng_seed=obj.get("rng_seed"),
            n_value_evals=obj.get("n_value_evals", 0),
            n_meta_calls=obj.get("n_meta_calls", 0),
            probe_log=tuple(
                (tuple(bits), s) for bits, s in obj.get("probe_log", [])
            ),
            ledger=obj.get("ledger"),
            detail=obj.get("detail", {}),
        )


def _memoize(v: ValueFn) -> MemoizedValue:
    return v if isinstance(v, MemoizedValue) else MemoizedValue(v)


def _result(scores, estimator, mv: MemoizedValue, seed=None, meta=0, **detail):
    return AttributionResult(
        scores=tuple(float(s) for s in scores),
        estimator=estimator,
        rng_seed=seed,
        n_value_evals=mv.n_evals,
        n_meta_calls=meta,
        probe_log=tuple(mv.log),
        detail=detail,
    )


# --- Shapley ----------------------------------------------------------------


def shap_exact(v: ValueFn, m: int, exact_limit: int = EXACT_LIMIT) -> AttributionResult:
    """Exact Shapley values by full subset enumeration."""
    if m > exact_limit:
        raise TooManySegments(f"{m} segments exceeds exact enumeration limit {exact_limit}")
    mv = _memoize(v)
    values = {}
    for bits in itertools.product((False, True), repeat=m):
        values[bits] = mv(Mask(bits))
    fact = [math.factorial(i) for i in range(m + 1)]
    scores = []
    for j in range(m):
        phi = 0.0
        others = [i for i in range(m) if i != j]
        for size in range(m):
            weight = fact[size] * fact[m - size - 1] / fact[m]
            for combo in itertools.combinations(others, size):
                without = tuple(i in combo for i in range(m))
                with_j = tuple(i in combo or i == j for i in range(m))
                phi += weight * (values[with_j] - values[without])
        scores.append(phi)
    return _result(scores, "shap_exact", mv)


def shap_mc(
    v: ValueFn,
    m: int,
    n_permutations: int | None = None,
    seed: int = 0,
) -> AttributionResult:
    """Monte-Carlo Shapley by permutation sampling of inclusion orders."""
    if n_permutations is None:
        n_permutations = 200 * m
    if n_permutations < 1:
        raise ProcutError("n_permutations must be >= 1")
    mv = _memoize(v)
    rng = random.Random(seed)
    totals = [0.0] * m
    for _ in range(n_permutations):
        order = list(range(m))
        rng.shuffle(order)
        bits = [False] * m
        prev = mv(Mask(tuple(bits)))
        for j in order:
            bits[j] = True
            cur = mv(Mask(tuple(bits)))
            totals[j] += cur - prev
            prev = cur
    scores = [t / n_permutations for t in totals]
    return _result(scores, "shap_mc", mv, seed=seed, n_permutations=n_permutations)


def loo(v: ValueFn, m: int) -> AttributionResult:
    """Leave-One-Out: score drop when a single segment is removed."""
    if m < 1:
        raise ProcutError("need at least one segment")
    mv = _memoize(v)
    full = mv(Mask.full(m))
    scores = [full - mv(Mask.full(m).with_bit(j, False)) for j in range(m)]
    return _result(scores, "loo", mv)


# --- LASSO on random masks --------------------------------------------------


def sample_masks(
    m: int,
    n_masks: int,
    seed: int = 0,
    p_include: float = DEFAULT_P_INCLUDE,
) -> list[Mask]:
    """i.i.d. Bernoulli masks; all-zero draws are resampled."""
    if not 0 < p_include < 1:
        raise ProcutError("p_include must be in (0, 1)")
    rng = random.Random(seed)
    masks = []
    for _ in range(n_masks):
        while True:
            bits = tuple(rng.random() < p_include for _ in range(m))
            if any(bits):
                break
        masks.append(Mask(bits))
    return masks


@dataclass(frozen=True)
class LassoFit:
    lam: float
    coefficients: tuple[float, ...]
    intercept: float
    n_masks: int
    converged: bool


def fit_lasso(
    designs: Sequence[Mask],
    targets: Sequence[float],
    lam: float,
    tol: float = 1e-8,
    max_iter: int = 10000,
) -> LassoFit:
    """Cyclic coordinate descent with soft-thresholding.

    Minimizes (1/2n)||y - b - X beta||^2 + lam * ||beta||_1 with centered
    columns and a free intercept.
    """
    import numpy as np

    if not designs:
        raise DimensionMismatch("no design masks")
    m = len(designs[0])
    if len(designs) != len(targets):
        raise DimensionMismatch("designs and targets differ in length")
    if len(designs) < m:
        raise DimensionMismatch(f"need at least {m} masks, got {len(designs)}")
    x = np.array([d.to_list() for d in designs], dtype=float)
    y = np.asarray(targets, dtype=float)
    n = x.shape[0]
    col_mean = x.mean(axis=0)
    xc = x - col_mean
    y_mean = y.mean()
    yc = y - y_mean
    z = (xc * xc).sum(axis=0) / n
    beta = np.zeros(m)
    resid = yc.copy()
    converged = False
    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(m):
            if z[j] == 0:
                continue
            rho = (xc[:, j] @ resid) / n + z[j] * beta[j]
            new = math.copysign(max(abs(rho) - lam, 0.0), rho) / z[j]
            delta = new - beta[j]
            if delta != 0.0:
                resid -= xc[:, j] * delta
                beta[j] = new
            max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            converged = True
            break
    intercept = y_mean - float(col_mean @ beta)
    return LassoFit(
        lam=lam,
        coefficients=tuple(float(b) for b in beta),
        intercept=intercept,
        n_masks=n,
        converged=converged,
    )


def lasso_attribution(
    v: ValueFn,
    m: int,
    n_masks: int | None = None,
    seed: int = 0,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    p_include: float = DEFAULT_P_INCLUDE,
) -> AttributionResult:
    """Fit sparse linear scores from randomly masked evaluations.

    Keeps the largest (most regularized) lambda on the descending grid whose
    nonzero support matches the least-regularized fit, so the scores are as
    shrunk as possible without dropping recoverable segments.
    """
    if not lambda_grid:
        raise ProcutError("lambda_grid must be non-empty")
    if list(lambda_grid) != sorted(lambda_grid, reverse=True):
        raise ProcutError("lambda_grid must be descending")
    if n_masks is None:
        n_masks = 8 * m
    mv = _memoize(v)
    masks = sample_masks(m, n_masks, seed=seed, p_include=p_include)
    targets = [mv(mask) for mask in masks]
    if all(t == targets[0] for t in targets):
        return _result([0.0] * m, "lasso", mv, seed=seed, constant_targets=True)
    fits = [fit_lasso(masks, targets, lam) for lam in lambda_grid]
    support = lambda f: frozenset(j for j, c in enumerate(f.coefficients) if c != 0.0)
    target_support = support(fits[-1])
    if not target_support:
        raise AllZeroFit("even the smallest lambda shrank all coefficients to zero")
    for lam, fit in zip(lambda_grid, fits):
        if support(fit) == target_support:
            return _result(
                fit.coefficients, "lasso", mv, seed=seed, selected_lambda=lam
            )
    raise AllZeroFit("unreachable")  # pragma: no cover


# --- greedy forward selection -----------------------------------------------


def greedy_forward(v: ValueFn, m: int) -> AttributionResult:
    """Add segments by observed gain; a_j is the gain when j was added."""
    if m < 1:
        raise ProcutError("need at least one segment")
    mv = _memoize(v)
    current = [False] * m
    base = mv(Mask(tuple(current)))
    scores = [0.0] * m
    remaining = list(range(m))
    while remaining:
        best_j, best_val = None, None
        for j in remaining:
            trial = list(current)
            trial[j] = True
            val = mv(Mask(tuple(trial)))
            if best_val is None or val > best_val:
                best_j, best_val = j, val
        scores[best_j] = best_val - base
        current[best_j] = True
        base = best_val
        remaining.remove(best_j)
    return _result(scores, "greedy", mv)


# --- LLM-driven probe-and-test ranking --------------------------------------


def _load_resource(name: str) -> str:
    return resources.files("procut.resources").joinpath(name).read_text("utf-8")


def _parse_masks(payload, m: int) -> list[Mask]:
    masks = payload.get("masks") if isinstance(payload, dict) else None
    if not isinstance(masks, list) or not masks:
        raise InvalidMaskShape("response carries no mask list")
    out = []
    for raw in masks:
        if (
            not isinstance(raw, list)
            or len(raw) != m
            or any(b not in (0, 1) for b in raw)
        ):
            raise InvalidMaskShape(f"bad mask {raw!r} for {m} segments")
        if not any(raw):
            raise InvalidMaskShape("all-zero mask cannot be evaluated")
        out.append(Mask.from_list(raw))
    return out


def _parse_ranking(payload, m: int) -> list[int]:
    ranking = payload.get("ranking") if isinstance(payload, dict) else None
    if not isinstance(ranking, list) or sorted(ranking) != list(range(m)):
        raise InvalidRanking(f"{ranking!r} is not a permutation of 0..{m - 1}")
    return ranking


def llm_ranker(
    seg: SegmentedTemplate,
    task: EvalTask,
    gw: Gateway,
    t: int,
    k: int,
    model: str = "default",
    retry_limit: int = 2,
    split: str = "train",
    answer_tag: str = "answer",
) -> AttributionResult:
    """Probe-and-test ranking: the LLM proposes t candidate masks, each is
    scored on the probe split, and the LLM ranks segments from the results;
    a_j = 1 / rank(j). Exactly two meta-calls per successful run.
    """
    m = seg.num_segments
    if not 1 <= k <= m:
        raise ProcutError(f"k must be in 1..{m}")
    if t < 1:
        raise ProcutError("t must be >= 1")
    meta = 0

    ask = substitute(
        _load_resource("ask_llm_for_index.txt"),
        {
            "segmented_prompt_template": json.dumps(
                [s.text for s in seg.segments], ensure_ascii=False
            ),
            "num_mask": str(t),
            "num_features": str(m),
        },
    )
    ask_req = CompletionRequest(model=model, prompt=ask)
    masks = None
    last_error: Exception | None = None
    for attempt in range(retry_limit + 1):
        completion = gw.complete(ask_req, phase="attribution", use_cache=attempt == 0)
        meta += 1
        try:
            masks = _parse_masks(extract_json(completion), m)
            break
        except (InvalidMaskShape, MalformedResponse) as exc:
            last_error = exc
    if masks is None:
        raise last_error

    mask_scores = [
        evaluate_mask(seg, mask, task, split, gw, model=model, answer_tag=answer_tag)
        for mask in masks
    ]
    experiments = "\n".join(
        f"mask: {mask.to_list()}, score: {ms.mean_score:.6f}"
        for mask, ms in zip(masks, mask_scores)
    )
    rank_prompt = substitute(
        _load_resource("rank_prompt.txt"), {"experiments": experiments}
    )
    rank_req = CompletionRequest(model=model, prompt=rank_prompt)
    ranking = None
    for attempt in range(retry_limit + 1):
        completion = gw.complete(rank_req, phase="attribution", use_cache=attempt == 0)
        meta += 1
        try:
            ranking = _parse_ranking(extract_json(completion), m)
            break
        except (InvalidRanking, MalformedResponse) as exc:
            last_error = exc
    if ranking is None:
        raise last_error

    scores = [1.0 / (ranking.index(j) + 1) for j in range(m)]
    probe_log = tuple(
        (tuple(mask.to_list()), ms.mean_score) for mask, ms in zip(masks, mask_scores)
    )
    return AttributionResult(
        scores=tuple(scores),
        estimator="llm_ranker",
        n_value_evals=len(masks),
        n_meta_calls=meta,
        probe_log=probe_log,
        detail={"t": t, "k": k, "ranking": ranking},
    )


def random_attribution(m: int, seed: int = 0) -> AttributionResult:
    rng = random.Random(seed)
    scores = [rng.random() for _ in range(m)]
    return AttributionResult(
        scores=tuple(scores), estimator="random", rng_seed=seed
    )


def brute_force_best(
    v: ValueFn, m: int, k: int, exact_limit: int = EXACT_LIMIT
) -> Mask:
    """Best size-k mask by exhaustive search; ties keep the lowest indices."""
    if m > exact_limit:
        raise TooManySegments(f"{m} segments exceeds exact enumeration limit {exact_limit}")
    if not 1 <= k <= m:
        raise ProcutError(f"k must be in 1..{m}")
    mv = _memoize(v)
    best_mask, best_val = None, None
    for combo in itertools.combinations(range(m), k):
        mask = Mask.from_indices(m, combo)
        val = mv(mask)
        if best_val is None or val > best_val:
            best_mask, best_val = mask, val
    return best_mask

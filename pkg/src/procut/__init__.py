"""procut: training-free prompt-template compression.

Segments a prompt template, estimates each segment's contribution to a task
metric, and prunes low-utility segments to a target compression ratio.
"""

from .attribution import (
    AttributionResult,
    LassoFit,
    brute_force_best,
    fit_lasso,
    greedy_forward,
    lasso_attribution,
    llm_ranker,
    loo,
    random_attribution,
    sample_masks,
    shap_exact,
    shap_mc,
)
from .domain import (
    EvalExample,
    EvalTask,
    Mask,
    MetricId,
    PromptTemplate,
    Segment,
    SegmentationStrategy,
    SegmentedTemplate,
    count_tokens,
    load_examples,
    parse_template,
    render,
)
from .evaluation import (
    MaskScore,
    MemoizedValue,
    evaluate_mask,
    exact_match,
    make_value_fn,
    ndcg,
    normalize_answer,
    token_f1,
)
from .gateway import (
    CallLedger,
    ChainOracle,
    CompletionRequest,
    FunctionOracle,
    Gateway,
    HttpTransport,
    ScriptedOracle,
    cache_key,
)
from .oracles import SyntheticOracle
from .pipeline import (
    CompressionConfig,
    RunReport,
    TradeoffCurve,
    compress_in_loop,
    prune,
    run_procut,
    sweep,
    vanilla_llm_compress,
)
from .segmentation import (
    SegmentationConfig,
    segment,
    segment_llm,
    segment_predefined,
    segment_structural,
)

__version__ = "0.1.0"

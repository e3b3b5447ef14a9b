"""Command-line entry point.

Exit codes: 0 ok, 1 usage, 2 bad input, 3 gateway failure, 4 semantic mismatch.
With --output json a single JSON document goes to stdout; logs go to stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .attribution import AttributionResult
from .domain import (
    EvalTask,
    MetricId,
    SegmentationStrategy,
    count_tokens,
    load_examples,
    parse_template,
)
from .errors import GatewayError, MissingInput, ProcutError
from .evaluation import ndcg
from .gateway import ChainOracle, Gateway, HttpTransport, ScriptedOracle
from .oracles import SyntheticOracle
from .pipeline import (
    ESTIMATORS,
    CompressionConfig,
    run_procut,
    sweep as run_sweep,
)
from .segmentation import DEFAULT_MARKER, SegmentationConfig, segment

# usage errors must exit 1; click's default of 2 is reserved for bad input data
click.UsageError.exit_code = 1


def _log(msg: str):
    click.echo(msg, err=True)


def _fail(code: int, msg: str):
    _log(f"error: {msg}")
    sys.exit(code)


def _build_oracle(spec: dict):
    mode = spec.get("mode")
    if mode == "scripted":
        return ScriptedOracle(spec["responses"])
    if mode == "synthetic":
        return SyntheticOracle(
            [(text, int(w)) for text, w in spec["components"]],
            int(spec["denominator"]),
        )
    raise ProcutError(f"unknown mock mode {mode!r}")


def _load_mock(path: str):
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if "oracles" in obj:
        return ChainOracle([_build_oracle(o) for o in obj["oracles"]])
    return _build_oracle(obj)


def _make_gateway(endpoint, mock, parallelism, cache):
    if mock:
        try:
            transport = _load_mock(mock)
        except (OSError, json.JSONDecodeError, KeyError, ProcutError) as exc:
            _fail(2, f"cannot load mock file {mock}: {exc}")
    elif endpoint:
        transport = HttpTransport(endpoint)
    else:
        return None
    return Gateway(transport, cache_path=cache, parallelism=parallelism)


def _read_template(path: str):
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _fail(2, f"cannot read template {path}: {exc}")
    try:
        return parse_template(raw)
    except ProcutError as exc:
        _fail(2, f"invalid template {path}: {exc}")


def _read_task(path: str, metric: str):
    try:
        examples = tuple(load_examples(path))
    except (OSError, ProcutError) as exc:
        _fail(2, f"cannot read dataset {path}: {exc}")
    if not examples:
        _fail(2, f"dataset {path} is empty")
    return EvalTask(train=examples, test=examples, metric=MetricId(metric))


def _check_ratio(r: float):
    if not 0 <= r <= 1:
        _fail(1, f"--ratio must be in [0, 1], got {r}")


def gateway_options(f):
    f = click.option("--endpoint", help="chat-completions base URL")(f)
    f = click.option("--model", default="default", show_default=True)(f)
    f = click.option("--mock", help="mock oracle JSON file")(f)
    f = click.option("--parallelism", default=10, show_default=True, type=int)(f)
    f = click.option("--cache", help="persistent response cache file")(f)
    return f


@click.group()
def main():
    """Prompt-template compression: segment, attribute, prune."""


@main.command("segment")
@click.option("-t", "--template", "template_path", required=True)
@click.option(
    "--strategy",
    type=click.Choice(["predefined", "structural", "llm"]),
    default="structural",
    show_default=True,
)
@click.option("--max-units", default=8, show_default=True, type=int)
@click.option("--marker", default=DEFAULT_MARKER, show_default=True)
@click.option("--output", type=click.Choice(["human", "json"]), default="json")
@gateway_options
def cmd_segment(template_path, strategy, max_units, marker, output,
                endpoint, model, mock, parallelism, cache):
    """Split a template into segments and print them."""
    if max_units < 1:
        _fail(1, "--max-units must be >= 1")
    template = _read_template(template_path)
    gw = _make_gateway(endpoint, mock, parallelism, cache)
    cfg = SegmentationConfig(
        strategy=SegmentationStrategy(strategy),
        max_units=max_units,
        marker=marker,
        model=model,
    )
    if strategy == "llm" and gw is None:
        _fail(3, "llm segmentation needs --endpoint or --mock")
    try:
        seg = segment(template, cfg, gw)
    except GatewayError as exc:
        _fail(3, str(exc))
    except ProcutError as exc:
        _fail(2, str(exc))
    doc = {
        "strategy": seg.strategy.value,
        "segments": [
            {
                "index": s.index,
                "text": s.text,
                "tokens": count_tokens(s.text),
                "placeholders": list(s.contains_placeholders),
            }
            for s in seg.segments
        ],
    }
    if output == "json":
        click.echo(json.dumps(doc, ensure_ascii=False, sort_keys=True))
    else:
        for s in seg.segments:
            click.echo(f"[{s.index}] ({count_tokens(s.text)} tokens) {s.text!r}")


def _compression_config(estimator, ratio, strategy, max_units, marker, seed,
                        model, pin, t, k):
    opts = {}
    if estimator == "llm_ranker":
        if t is not None:
            opts["t"] = t
        if k is not None:
            opts["k"] = k
    return CompressionConfig(
        ratio=ratio,
        estimator=estimator,
        segmentation=SegmentationConfig(
            strategy=SegmentationStrategy(strategy),
            max_units=max_units,
            marker=marker,
            model=model,
        ),
        pinned_indices=frozenset(pin),
        seed=seed,
        model=model,
        estimator_options=opts,
    )


def common_run_options(f):
    f = click.option("-t", "--template", "template_path", required=True)(f)
    f = click.option("-d", "--dataset", "dataset_path", required=True)(f)
    f = click.option(
        "--estimator", type=click.Choice(list(ESTIMATORS)), default="shap_exact",
        show_default=True,
    )(f)
    f = click.option(
        "--metric", type=click.Choice(["exact_match", "token_f1"]),
        default="token_f1", show_default=True,
    )(f)
    f = click.option(
        "--strategy", type=click.Choice(["predefined", "structural", "llm"]),
        default="structural", show_default=True,
    )(f)
    f = click.option("--max-units", default=8, show_default=True, type=int)(f)
    f = click.option("--marker", default=DEFAULT_MARKER, show_default=True)(f)
    f = click.option("--seed", default=0, show_default=True, type=int)(f)
    f = click.option("--pin", multiple=True, type=int,
                     help="segment index to always keep (repeatable)")(f)
    f = click.option("--t", "t_masks", type=int, default=None,
                     help="candidate masks for llm_ranker")(f)
    f = click.option("--k", "k_keep", type=int, default=None,
                     help="units to keep hint for llm_ranker")(f)
    f = click.option("--output", type=click.Choice(["human", "json"]),
                     default="human", show_default=True)(f)
    return f


def _require_gateway(gw):
    if gw is None:
        _fail(3, "this command needs --endpoint or --mock")


def _run_guard(fn):
    try:
        return fn()
    except GatewayError as exc:
        _fail(3, str(exc))
    except MissingInput as exc:
        _fail(4, f"dataset does not cover template placeholders: {exc}")
    except ProcutError as exc:
        _fail(4, str(exc))


@main.command("compress")
@common_run_options
@click.option("--ratio", required=True, type=float)
@click.option("--runs-dir", default="runs", show_default=True)
@gateway_options
def cmd_compress(template_path, dataset_path, estimator, metric, strategy,
                 max_units, marker, seed, pin, t_masks, k_keep, output, ratio,
                 runs_dir, endpoint, model, mock, parallelism, cache):
    """Run the full pipeline and write a run report."""
    _check_ratio(ratio)
    template = _read_template(template_path)
    task = _read_task(dataset_path, metric)
    gw = _make_gateway(endpoint, mock, parallelism, cache)
    _require_gateway(gw)
    config = _compression_config(estimator, ratio, strategy, max_units, marker,
                                 seed, model, pin, t_masks, k_keep)
    report = _run_guard(
        lambda: run_procut(template, task, config, gw, runs_dir=runs_dir)
    )
    path = Path(runs_dir) / f"{report.run_id}.json"
    if output == "json":
        click.echo(json.dumps(report.to_dict(), ensure_ascii=False, sort_keys=True))
    else:
        click.echo(f"report: {path}")
        click.echo(
            f"tokens {report.tokens_before} -> {report.tokens_after}, "
            f"score {report.score_before:.4f} -> {report.score_after:.4f}"
        )


@main.command("attribute")
@common_run_options
@gateway_options
@click.option("-o", "--out", help="write AttributionResult JSON here")
def cmd_attribute(template_path, dataset_path, estimator, metric, strategy,
                  max_units, marker, seed, pin, t_masks, k_keep, output,
                  endpoint, model, mock, parallelism, cache, out):
    """Estimate per-segment attribution scores."""
    template = _read_template(template_path)
    task = _read_task(dataset_path, metric)
    gw = _make_gateway(endpoint, mock, parallelism, cache)
    _require_gateway(gw)
    config = _compression_config(estimator, 0.5, strategy, max_units, marker,
                                 seed, model, pin, t_masks, k_keep)
    from .pipeline import _run_attribution

    def run():
        seg = segment(template, config.segmentation, gw)
        return _run_attribution(seg, task, config, gw)

    attr = _run_guard(run)
    doc = attr.to_dict()
    text = json.dumps(doc, ensure_ascii=False, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        _log(f"wrote {out}")
    if output == "json" or not out:
        click.echo(text)
    else:
        for i, s in enumerate(attr.scores):
            click.echo(f"[{i}] {s:+.4f}")


@main.command("sweep")
@common_run_options
@click.option("--ratios", default="0.25,0.5,0.75", show_default=True,
              help="comma-separated compression ratios")
@gateway_options
def cmd_sweep(template_path, dataset_path, estimator, metric, strategy,
              max_units, marker, seed, pin, t_masks, k_keep, output, ratios,
              endpoint, model, mock, parallelism, cache):
    """Trade-off curve over several compression ratios."""
    try:
        ratio_list = [float(r) for r in ratios.split(",") if r.strip()]
    except ValueError:
        _fail(1, f"--ratios must be comma-separated numbers, got {ratios!r}")
    if not ratio_list:
        _fail(1, "--ratios is empty")
    for r in ratio_list:
        _check_ratio(r)
    template = _read_template(template_path)
    task = _read_task(dataset_path, metric)
    gw = _make_gateway(endpoint, mock, parallelism, cache)
    _require_gateway(gw)
    config = _compression_config(estimator, ratio_list[0], strategy, max_units,
                                 marker, seed, model, pin, t_masks, k_keep)
    curve = _run_guard(lambda: run_sweep(template, task, config, ratio_list, gw))
    if output == "json":
        click.echo(json.dumps(curve.to_dict(), ensure_ascii=False, sort_keys=True))
    else:
        for r, reduction, s in curve.points:
            click.echo(f"ratio {r:.2f}: -{reduction * 100:.1f}% tokens, score {s:.4f}")


@main.command("ndcg")
@click.argument("estimated_file")
@click.argument("gold_file")
@click.option("--output", type=click.Choice(["human", "json"]), default="human")
def cmd_ndcg(estimated_file, gold_file, output):
    """Ranking fidelity of an estimated attribution against a gold one."""
    results = []
    for path in (estimated_file, gold_file):
        try:
            results.append(
                AttributionResult.from_dict(
                    json.loads(Path(path).read_text(encoding="utf-8"))
                )
            )
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            _fail(2, f"cannot read attribution file {path}: {exc}")
    estimated, gold = results
    if estimated.num_segments != gold.num_segments:
        _fail(4, f"segment counts differ: {estimated.num_segments} vs {gold.num_segments}")
    try:
        value = ndcg(estimated, gold)
    except ProcutError as exc:
        _fail(4, str(exc))
    if output == "json":
        click.echo(json.dumps({"ndcg": value}))
    else:
        click.echo(f"{value:.6f}")


@main.command("serve")
@click.option("--listen", default="127.0.0.1:8000", show_default=True)
@click.option("--runs-dir", default="runs", show_default=True)
@click.option("--max-concurrent-runs", default=2, show_default=True, type=int)
@gateway_options
def cmd_serve(listen, runs_dir, max_concurrent_runs,
              endpoint, model, mock, parallelism, cache):
    """Run the HTTP service for the companion UI."""
    import uvicorn

    from .service import create_app

    gw = _make_gateway(endpoint, mock, parallelism, cache)
    _require_gateway(gw)
    host, _, port = listen.rpartition(":")
    app = create_app(gw, runs_dir=runs_dir, max_concurrent_runs=max_concurrent_runs)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))


if __name__ == "__main__":
    main()

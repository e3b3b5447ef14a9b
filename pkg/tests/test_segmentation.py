import json

import pytest

from procut import (
    Gateway,
    ScriptedOracle,
    parse_template,
    segment_llm,
    segment_predefined,
    segment_structural,
)
from procut.domain import SegmentationStrategy
from procut.errors import GatewayError
from procut.gateway import MockTransport
from procut.segmentation import _load_resource
from procut.domain import substitute


def texts(seg):
    return [s.text for s in seg.segments]


class TestPredefined:
    def test_one_marker(self):
        seg = segment_predefined(parse_template("A\n---SEGMENT---\nB"))
        assert texts(seg) == ["A\n", "\nB"]
        assert seg.source.raw_text == "A\n\nB"

    def test_no_marker_single_segment(self):
        seg = segment_predefined(parse_template("A"))
        assert texts(seg) == ["A"]

    def test_five_blocks_four_markers(self):
        blocks = [
            "You are an expert in {domain}.\n",
            "Let's think step-by-step before answering.\n",
            "Here are a few examples: {examples}\n",
            "Here is the context: {context}\n",
            "Here is the question you need to answer. {question}",
        ]
        raw = "\n---SEGMENT---\n".join(b for b in blocks)
        seg = segment_predefined(parse_template(raw))
        assert seg.num_segments == 5

    def test_strategy_tag(self):
        seg = segment_predefined(parse_template("A\n---SEGMENT---\nB"))
        assert seg.strategy == SegmentationStrategy.predefined


class TestStructural:
    def test_pure_sentence_split(self):
        seg = segment_structural(parse_template("S1. S2. S3."), 3)
        assert texts(seg) == ["S1. ", "S2. ", "S3."]

    def test_end_merge_to_bound(self):
        seg = segment_structural(parse_template("S1. S2. S3."), 2)
        assert texts(seg) == ["S1. ", "S2. S3."]

    def test_placeholder_never_split(self):
        seg = segment_structural(parse_template("Use {question} now."), 5)
        assert seg.num_segments == 1

    def test_paragraph_boundaries(self):
        seg = segment_structural(parse_template("Para one\n\nPara two"), 4)
        assert texts(seg) == ["Para one\n\n", "Para two"]

    def test_deterministic(self):
        raw = "First sentence. Second one!\n\nA new paragraph? Yes."
        a = segment_structural(parse_template(raw), 8)
        b = segment_structural(parse_template(raw), 8)
        assert texts(a) == texts(b)

    def test_round_trip(self):
        raw = "First sentence. Second one!\n\nA new paragraph? Yes."
        seg = segment_structural(parse_template(raw), 3)
        assert "".join(texts(seg)) == raw

    def test_max_units_one(self):
        seg = segment_structural(parse_template("A. B. C."), 1)
        assert texts(seg) == ["A. B. C."]


def seg_prompt_for(raw, max_units=8):
    return substitute(
        _load_resource("segmentation_prompt.txt"),
        {"current_prompt": raw, "max_units": str(max_units)},
    )


class TestLlmSegmentation:
    def test_valid_two_unit_split(self):
        raw = "A. B."
        response = json.dumps({"units": [{"template": "A. "}, {"template": "B."}]})
        gw = Gateway(ScriptedOracle({seg_prompt_for(raw): response}))
        seg = segment_llm(parse_template(raw), 8, gw)
        assert texts(seg) == ["A. ", "B."]
        assert seg.strategy == SegmentationStrategy.llm

    def test_invalid_split_falls_back_to_structural(self):
        raw = "A. B."
        # drops a character: never accepted
        response = json.dumps({"units": [{"template": "A. "}, {"template": "B"}]})
        gw = Gateway(ScriptedOracle({seg_prompt_for(raw): response}))
        seg = segment_llm(parse_template(raw), 8, gw, retry_limit=2)
        assert seg.strategy == SegmentationStrategy.structural
        assert "".join(texts(seg)) == raw

    def test_figure_example_two_units(self):
        raw = (
            "Please answer the following question <question>{question}</question>.   "
            "Please provide your answer in the following format: <format>{format}</format>."
        )
        units = [
            "Please answer the following question <question>{question}</question>.   ",
            "Please provide your answer in the following format: <format>{format}</format>.",
        ]
        response = json.dumps({"units": [{"template": u} for u in units]})
        gw = Gateway(ScriptedOracle({seg_prompt_for(raw): response}))
        seg = segment_llm(parse_template(raw), 8, gw)
        assert seg.num_segments == 2
        assert "".join(texts(seg)) == raw

    def test_gateway_error_propagates(self):
        class Broken(MockTransport):
            def __call__(self, req):
                raise GatewayError("down")

        gw = Gateway(Broken())
        with pytest.raises(GatewayError):
            segment_llm(parse_template("A. B."), 8, gw)

    def test_fenced_json_accepted(self):
        raw = "A. B."
        inner = json.dumps({"units": [{"template": "A. "}, {"template": "B."}]})
        gw = Gateway(ScriptedOracle({seg_prompt_for(raw): f"```json\n{inner}\n```"}))
        seg = segment_llm(parse_template(raw), 8, gw)
        assert texts(seg) == ["A. ", "B."]

    def test_overlapping_units_rejected(self):
        raw = "A. B."
        response = json.dumps(
            {"units": [{"template": "A. "}, {"template": "A. B."}]}
        )
        gw = Gateway(ScriptedOracle({seg_prompt_for(raw): response}))
        seg = segment_llm(parse_template(raw), 8, gw)
        assert seg.strategy == SegmentationStrategy.structural

"""Synthetic evaluation oracle for offline testing.

Impersonates the evaluation LLM: it is configured with a per-component
weight table, infers from each incoming prompt which components were
included, and answers so that the token-overlap F1 against its fixed
reference equals the configured set-function value exactly.
"""

from __future__ import annotations

from fractions import Fraction

from .gateway import CompletionRequest, MockTransport


class SyntheticOracle(MockTransport):
    """Value-function responder over recognizable component texts.

    `components` maps component text (as it appears in rendered prompts,
    i.e. after placeholder substitution) to an integer weight numerator;
    the set-function is v(mask) = sum(included weights) / denominator.
    Text in the prompt that matches no component contributes zero.
    """

    def __init__(self, components: list[tuple[str, int]], denominator: int):
        if denominator < 1:
            raise ValueError("denominator must be >= 1")
        total = sum(w for _, w in components)
        if total > denominator:
            raise ValueError("component weights exceed denominator")
        for _, w in components:
            if w < 0:
                raise ValueError("weights must be non-negative")
        self.components = list(components)
        self.denominator = denominator
        self._ref_tokens = [f"tok{i}" for i in range(2 * denominator)]

    @property
    def reference(self) -> str:
        """Reference string the eval task must use (metric: token_f1)."""
        return " ".join(self._ref_tokens)

    def infer_included(self, prompt: str) -> list[bool]:
        """Which configured components appear in the prompt, in order."""
        included = []
        pos = 0
        for text, _ in self.components:
            idx = prompt.find(text, pos)
            if idx >= 0:
                included.append(True)
                pos = idx + len(text)
            else:
                included.append(False)
        return included

    def value(self, included: list[bool]) -> float:
        num = sum(w for (_, w), on in zip(self.components, included) if on)
        return float(Fraction(num, self.denominator))

    def __call__(self, req: CompletionRequest) -> str:
        included = self.infer_included(req.prompt)
        num = sum(w for (_, w), on in zip(self.components, included) if on)
        # 2*num reference tokens plus padding junk gives F1 == num/denominator
        correct = self._ref_tokens[: 2 * num]
        junk = [f"junk{i}" for i in range(2 * (self.denominator - num))]
        return " ".join(correct + junk) if (correct or junk) else ""

import pytest

from procut import (
    EvalExample,
    EvalTask,
    Gateway,
    Mask,
    MetricId,
    SegmentationStrategy,
    SegmentedTemplate,
    SyntheticOracle,
    make_value_fn,
)


def additive_v(weights):
    """Direct additive set-function v(S) = sum of included weights."""

    def v(mask: Mask) -> float:
        return sum(w for w, b in zip(weights, mask.bits) if b)

    return v


def table_v(values: dict, default=0.0):
    """Set-function given as {included-index-tuple: value}."""

    def v(mask: Mask) -> float:
        return values.get(mask.indices, default)

    return v


class GatewayFixture:
    """Synthetic additive task wired through the full gateway path."""

    def __init__(self, nums, den, cache_path=None, extra_oracle=None):
        self.nums = list(nums)
        self.den = den
        self.texts = [f"unit{i} payload{i}. " for i in range(len(nums))]
        self.seg = SegmentedTemplate.from_texts(
            self.texts, SegmentationStrategy.structural
        )
        self.oracle = SyntheticOracle(list(zip(self.texts, self.nums)), den)
        ex = EvalExample(inputs={}, reference=self.oracle.reference)
        self.task = EvalTask(train=(ex,), test=(ex,), metric=MetricId.token_f1)
        transport = self.oracle
        if extra_oracle is not None:
            from procut import ChainOracle

            transport = ChainOracle([extra_oracle, self.oracle])
        self.gateway = Gateway(transport, cache_path=cache_path)

    def value_fn(self, split="train"):
        return make_value_fn(self.seg, self.task, split, self.gateway)

    def exact_value(self, mask: Mask) -> float:
        num = sum(n for n, b in zip(self.nums, mask.bits) if b)
        return num / self.den


@pytest.fixture
def additive_gateway():
    return GatewayFixture

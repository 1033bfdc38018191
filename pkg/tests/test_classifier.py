import statistics

import pytest

from halludet.classifier import Classification, ClassifierConfig, classify, majority_label
from halludet.dataset import Label, TaskType
from halludet.errors import ConfigError, TooManyUnparseable
from halludet.llm import MockCompletionClient, parse_label, unit_interval_draw
from halludet.prompting import FORMAT_REMINDER

from conftest import make_point


class ScriptedClient:
    """Replays a fixed list of reply texts, one per sample index."""

    max_concurrency = 1

    def __init__(self, replies, retry_replies=None):
        self.replies = list(replies)
        self.retry_replies = dict(retry_replies or {})
        self.calls = []

    def complete(self, bundle, temperature, *, seed, sample_index):
        self.calls.append((sample_index, bundle.user_text))
        if bundle.user_text.endswith(FORMAT_REMINDER):
            return self.retry_replies.get(sample_index, "still confused")
        return self.replies[sample_index]


@pytest.fixture
def point():
    return make_point(TaskType.PARAPHRASE_GENERATION, 0)


class TestMajorityLabel:
    @pytest.mark.parametrize(
        "p,expected",
        [
            (0.65, Label.HALLUCINATION),
            (0.51, Label.HALLUCINATION),
            (1.0, Label.HALLUCINATION),
            (0.5, Label.NOT_HALLUCINATION),  # tie goes negative
            (0.49, Label.NOT_HALLUCINATION),
            (0.0, Label.NOT_HALLUCINATION),
        ],
    )
    def test_rule(self, p, expected):
        assert majority_label(p) is expected

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            majority_label(1.1)


class TestConfig:
    def test_submission_defaults(self):
        cfg = ClassifierConfig()
        assert cfg.temperature == 1.2
        assert cfg.samples_per_query == 20
        assert cfg.examples_per_label == 1

    def test_validation(self):
        with pytest.raises(ConfigError):
            ClassifierConfig(samples_per_query=0)
        with pytest.raises(ConfigError):
            ClassifierConfig(temperature=-0.5)
        with pytest.raises(ConfigError):
            ClassifierConfig(examples_per_label=-1)


class TestClassify:
    def test_vote_arithmetic(self, point, defs):
        replies = ["Hallucination"] * 13 + ["Not Hallucination"] * 7
        client = ScriptedClient(replies)
        cfg = ClassifierConfig(temperature=1.2, samples_per_query=20, examples_per_label=0)
        result = classify(point, [], cfg, defs, client)
        assert result.probability == 0.65
        assert result.positive_count == 13
        assert result.valid_sample_count == 20
        assert result.label is Label.HALLUCINATION
        assert result.probability == result.positive_count / result.valid_sample_count

    def test_all_negative(self, point, defs):
        client = ScriptedClient(["Not Hallucination"] * 20)
        cfg = ClassifierConfig(samples_per_query=20, examples_per_label=0)
        result = classify(point, [], cfg, defs, client)
        assert result.probability == 0.0
        assert result.label is Label.NOT_HALLUCINATION

    def test_sample_order_preserved(self, point, defs):
        replies = ["Hallucination", "Not Hallucination"] * 5
        client = ScriptedClient(replies)
        cfg = ClassifierConfig(samples_per_query=10, examples_per_label=0)
        result = classify(point, [], cfg, defs, client)
        assert [s.sample_index for s in result.samples] == list(range(10))
        assert [s.raw_text for s in result.samples] == replies

    def test_unparseable_recovers_after_reminder(self, point, defs):
        replies = ["???", "Hallucination", "Hallucination"]
        client = ScriptedClient(replies, retry_replies={0: "Not Hallucination"})
        cfg = ClassifierConfig(samples_per_query=3, examples_per_label=0)
        result = classify(point, [], cfg, defs, client)
        assert result.valid_sample_count == 3
        assert result.positive_count == 2
        # the re-query happened exactly once, for sample 0
        reminder_calls = [c for c in client.calls if c[1].endswith(FORMAT_REMINDER)]
        assert [c[0] for c in reminder_calls] == [0]

    def test_unparseable_shrinks_denominator(self, point, defs):
        replies = ["???", "Hallucination", "Hallucination", "Not Hallucination"]
        client = ScriptedClient(replies)  # retry also fails to parse
        cfg = ClassifierConfig(samples_per_query=4, examples_per_label=0)
        result = classify(point, [], cfg, defs, client)
        assert result.valid_sample_count == 3
        assert result.positive_count == 2
        assert result.probability == 2 / 3

    def test_too_many_unparseable(self, point, defs):
        replies = ["???", "???", "???", "Hallucination"]
        client = ScriptedClient(replies)
        cfg = ClassifierConfig(samples_per_query=4, examples_per_label=0)
        with pytest.raises(TooManyUnparseable):
            classify(point, [], cfg, defs, client)

    def test_half_valid_is_enough(self, point, defs):
        replies = ["???", "???", "Hallucination", "Hallucination"]
        client = ScriptedClient(replies)
        cfg = ClassifierConfig(samples_per_query=4, examples_per_label=0)
        result = classify(point, [], cfg, defs, client)
        assert result.valid_sample_count == 2
        assert result.probability == 1.0

    def test_deterministic_with_mock(self, point, defs):
        cfg = ClassifierConfig(temperature=1.0, samples_per_query=20, examples_per_label=0, seed=5)
        run1 = classify(point, [], cfg, defs, MockCompletionClient(0.5, seed=7))
        run2 = classify(point, [], cfg, defs, MockCompletionClient(0.5, seed=7))
        assert run1 == run2

    def test_mock_votes_match_independent_generator(self, point, defs):
        cfg = ClassifierConfig(samples_per_query=50, examples_per_label=0, seed=11)
        result = classify(point, [], cfg, defs, MockCompletionClient(0.37, seed=7))
        expected = sum(
            1
            for i in range(50)
            if unit_interval_draw(7, 11, i, point.id, "label") < 0.37
        )
        assert result.positive_count == expected
        assert result.valid_sample_count == 50

    def test_probability_integer_exact(self, point, defs):
        for n in (5, 20, 44, 50):
            cfg = ClassifierConfig(samples_per_query=n, examples_per_label=0, seed=n)
            result = classify(point, [], cfg, defs, MockCompletionClient(0.4, seed=1))
            assert result.probability == result.positive_count / result.valid_sample_count
            assert round(result.probability * result.valid_sample_count) == result.positive_count

    def test_concurrent_fanout_matches_sequential(self, point, defs):
        cfg = ClassifierConfig(samples_per_query=16, examples_per_label=0, seed=2)
        concurrent = MockCompletionClient(0.5, seed=3)  # max_concurrency = 4
        sequential = MockCompletionClient(0.5, seed=3)
        sequential.max_concurrency = 1
        a = classify(point, [], cfg, defs, concurrent)
        b = classify(point, [], cfg, defs, sequential)
        assert a == b

    def test_more_samples_reduce_probability_spread(self, point, defs):
        """Sanity harness: the vote fraction concentrates as samples grow."""
        client = MockCompletionClient(0.65, seed=1)

        def spread(samples_per_query: int) -> float:
            values = []
            for rep in range(100):
                cfg = ClassifierConfig(
                    samples_per_query=samples_per_query, examples_per_label=0, seed=rep
                )
                values.append(classify(point, [], cfg, defs, client).probability)
            return statistics.pstdev(values)

        assert spread(20) < spread(5)

    def test_raw_texts_reparse_to_sample_labels(self, point, defs):
        cfg = ClassifierConfig(samples_per_query=10, examples_per_label=0, seed=4)
        result = classify(point, [], cfg, defs, MockCompletionClient(0.5, seed=9))
        for sample in result.samples:
            assert parse_label(sample.raw_text) is sample.parsed

    def test_classification_is_frozen(self, point, defs):
        cfg = ClassifierConfig(samples_per_query=2, examples_per_label=0)
        result = classify(point, [], cfg, defs, MockCompletionClient(1.0, seed=0))
        assert isinstance(result, Classification)
        with pytest.raises(AttributeError):
            result.probability = 0.0

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from misinfo.corpus import LabeledTweet, TernaryLabel

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def make_tweets(counts: tuple[int, int, int], prefix: str = "t") -> list[LabeledTweet]:
    """Labeled placeholder tweets with the given per-class counts."""
    tweets = []
    for label, count in zip(TernaryLabel, counts):
        for i in range(count):
            tweets.append(
                LabeledTweet(f"{prefix}{int(label)}_{i}", f"text {i}", label)
            )
    return tweets


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Checklist lines registered by the acceptance tests; emitted after the run
# summary because pytest captures stdout from passing tests.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    failed = []
    for rep in terminalreporter.stats.get("failed", []):
        name = rep.nodeid.rsplit("::", 1)[-1]
        if name.startswith("test_criterion_"):
            number = int(name.split("_")[2])
            failed.append(f"[criterion {number}] FAIL - {name}")
    if ACCEPTANCE_LINES or failed:
        number = lambda line: int(line.split("]", 1)[0].split()[-1])
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES + failed, key=number):
            terminalreporter.write_line(line)

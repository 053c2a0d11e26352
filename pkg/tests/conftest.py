import numpy as np
import pytest

from wordspot import datasets

_ACCEPTANCE_VERDICTS = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Shared sink for the acceptance criteria's one-line verdicts."""
    return _ACCEPTANCE_VERDICTS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """A small deterministic three-class corpus shared by dataset/CLI tests."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    spec = datasets.SynthSpec(words=("cat", "dog", "bird"), height=24,
                              train_count=4, test_count=3, seed=11)
    manifest = datasets.generate_synthetic_corpus(spec, root)
    return root, manifest

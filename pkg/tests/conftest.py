import hypothesis
import numpy as np
import pytest
import torch

from intentrec.corpus import Corpus, InteractionSequence

hypothesis.settings.register_profile(
    "suite", deadline=None, max_examples=40, derandomize=True,
)
hypothesis.settings.load_profile("suite")


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)


def make_corpus(item_lists, item_count=None, split=True):
    sequences = [InteractionSequence(uid, list(items))
                 for uid, items in enumerate(item_lists, start=1)]
    if item_count is None:
        item_count = max(max(items) for items in item_lists)
    return Corpus(sequences=sequences, item_count=item_count, split_ready=split)


@pytest.fixture
def corpus_factory():
    return make_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

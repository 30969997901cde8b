"""Shared fixtures plus the acceptance-criteria summary hook."""

import pytest

from tweakcache.config import GatewayConfig
from tweakcache.embedder import EmbedderConfig
from tweakcache.llm_client import ModelEndpoint
from tweakcache.vector_index import IndexConfig

_acceptance_results: dict = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(num, label): marks a test as implementing an acceptance criterion",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    num, label = marker.args
    key = (num, label)
    bucket = _acceptance_results.setdefault(key, [])
    if report.when == "call":
        bucket.append(report.passed)
    elif report.failed or report.skipped:
        # setup/teardown failures and skips still count against the criterion
        bucket.append(False)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, label in sorted(_acceptance_results):
        outcomes = _acceptance_results[(num, label)]
        verdict = "PASS" if outcomes and all(outcomes) else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {num} - {label}: {verdict}")


def big_endpoint(**overrides) -> ModelEndpoint:
    defaults = dict(label="big", base_url="http://big.invalid/v1", model_name="big-model",
                    output_cost_per_token=25e-6)
    defaults.update(overrides)
    return ModelEndpoint(**defaults)


def small_endpoint(**overrides) -> ModelEndpoint:
    defaults = dict(label="small", base_url="http://small.invalid/v1", model_name="small-model",
                    output_cost_per_token=1e-6)
    defaults.update(overrides)
    return ModelEndpoint(**defaults)


def gateway_config(dimension: int = 384, **overrides) -> GatewayConfig:
    defaults = dict(
        embedder=EmbedderConfig(kind="hashed-test", dimension=dimension),
        index=IndexConfig(dimension=dimension),
        big=big_endpoint(),
        small=small_endpoint(),
    )
    defaults.update(overrides)
    return GatewayConfig(**defaults)


@pytest.fixture
def endpoints():
    return big_endpoint(), small_endpoint()

import json
import signal
from functools import cached_property
from json import loads as json_loads
from pathlib import Path
from typing import Any, Literal

import pytest
from hypothesis import HealthCheck, settings
from typer.testing import CliRunner, Result

from cmvlab.cli import cli as cmvcli
from cmvlab.core import ExactBackend, FloatBackend

_runner = CliRunner()

# Input generation timing varies by machine; don't fail on the too_slow health check.
settings.register_profile("default", suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


class JsonResult(Result):
    @cached_property
    def json(self, source: Literal["stdout", "stderr"] = "stdout"):
        return json_loads(getattr(self, source))


@pytest.fixture
def cli():
    """Cli runner."""

    def call(*args, **kwargs) -> JsonResult:
        result = _runner.invoke(cmvcli, args=args, **kwargs)
        return JsonResult(**vars(result))

    return call


@pytest.fixture
def scenario(tmp_path):
    """Writes scenario documents to disk and returns their path."""
    counter = 0

    def write(document: dict[str, Any] | list[dict[str, Any]] | str) -> str:
        nonlocal counter
        counter += 1
        path: Path = tmp_path / f"scenario_{counter}.json"
        path.write_text(document if isinstance(document, str) else json.dumps(document))
        return str(path)

    return write


@pytest.fixture
def exact():
    return ExactBackend()


@pytest.fixture
def floating():
    return FloatBackend(1e-10)


@pytest.fixture(scope="session", autouse=True)
def termination_handler():
    """Sends a SIGINT in case SIGTERM was sent to the current process.

    By default, fixture cleanup won't run on SIGTERM, which is unfortunately the default
    signal pycharm uses when trying to stop a process. See
    https://github.com/pytest-dev/pytest/issues/9142 for details and the origin of this
    snippet.
    """
    orig = signal.signal(signal.SIGTERM, signal.getsignal(signal.SIGINT))
    yield
    signal.signal(signal.SIGTERM, orig)

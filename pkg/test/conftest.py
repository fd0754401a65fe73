"""Pytest wiring for the script-style integration tests.

test_integration.py's functions take (tmp, paths) and share one workspace,
run in file order, exactly as its main() drives them.
"""

import sys
import tempfile
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))


@pytest.fixture(scope='module')
def tmp():
    with tempfile.TemporaryDirectory() as workspace:
        yield Path(workspace)


@pytest.fixture(scope='module')
def paths(request, tmp):
    return request.module.setup_workspace(tmp)

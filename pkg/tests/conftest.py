import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spixel import kernels


@pytest.fixture
def restore_backend():
    """Put the kernel backend back after a test switches it."""
    original = kernels.backend_name()
    yield
    kernels.set_backend(original)

"""
Shared pytest setup: repository root on sys.path and common fixtures.
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.security import SecurityContext  # noqa: E402


@pytest.fixture
def ctx80():
    """80% channel of the bench (eta = 0.8, delta = 0.14, V = 8.35)."""
    return SecurityContext(eta=0.8, delta=0.14, V=8.35)


@pytest.fixture
def ctx40():
    """40% channel of the bench (eta = 0.4, delta = 0.11, V = 8.35)."""
    return SecurityContext(eta=0.4, delta=0.11, V=8.35)

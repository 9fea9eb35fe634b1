import os
from pathlib import Path

import pytest

from qcl.vectors import parse_vectors

VECTOR_FILE = Path(__file__).parent / "vectors" / "quic_v1.txt"


@pytest.fixture(scope="session")
def vectors():
    """Pinned oracle vectors keyed by label (or kind#index)."""
    return {v.name: v for v in parse_vectors(VECTOR_FILE.read_text())}


@pytest.fixture
def clean_catalog_env(monkeypatch):
    monkeypatch.delenv("QCL_CATALOG", raising=False)


def pytest_report_header(config):
    from qcl import kernel

    return f"qcl kernel backend: {kernel.BACKEND}; QCL_PURE={os.environ.get('QCL_PURE', '')}"

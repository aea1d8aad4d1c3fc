import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from glossmt.corpus import LanguagePair

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def en_es() -> LanguagePair:
    return LanguagePair.from_code("en-es")


@pytest.fixture(scope="session")
def stub_endpoint():
    from stub_server import StubEndpoint

    with StubEndpoint() as server:
        yield server

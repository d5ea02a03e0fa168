from pathlib import Path

import pytest

from confocr.io_formats import attach_ocr, load_gt, load_ocr

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_document():
    """The hand-traced multi-component document used across the suite."""
    docs = load_gt(DATA_DIR / "fixture_gt.json", "generic_json")
    ocr = load_ocr(DATA_DIR / "fixture_ocr.json")
    return attach_ocr(docs, ocr)[0]

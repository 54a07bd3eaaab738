import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vove.store import EmbeddingStore, UtteranceRecord, join_manifest  # noqa: E402

DATA = Path(__file__).parent / "data"


def make_joined(rows, model_id="baseline"):
    """rows: (utterance_id, speaker_id, vector) triples -> JoinedStore."""
    dim = len(rows[0][2])
    store = EmbeddingStore.from_records(model_id, [(u, v) for u, _, v in rows], dim=dim)
    manifest = [UtteranceRecord(u, s, "t0") for u, s, _ in rows]
    return join_manifest(store, manifest)


def random_rows(rng, n_speakers, per_speaker, dim=6):
    rows = []
    for s in range(n_speakers):
        n = per_speaker if isinstance(per_speaker, int) else per_speaker[s]
        for u in range(n):
            # float32-representable so oracles see exactly what the store holds
            vec = rng.normal(size=dim).astype(np.float32).astype(np.float64)
            rows.append((f"s{s}u{u}", f"s{s}", vec.tolist()))
    return rows


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def data_dir():
    return DATA


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

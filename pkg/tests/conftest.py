import numpy as np
import pytest

from asyncevo.population import Candidate, EvaluationRecord, PopulationDB


def make_db(search_scores, ids=None, test_scores=None, val_scores=None):
    """Population of drafts with the given scores, inserted in order."""
    db = PopulationDB()
    ids = ids or [f"c{i}" for i in range(len(search_scores))]
    for i, (cid, s) in enumerate(zip(ids, search_scores)):
        rec = EvaluationRecord(search_score=s, val_score=None if val_scores is None else val_scores[i], evaluated_at=float(i))
        if test_scores is not None:
            rec.set_test(test_scores[i])
        db.insert(Candidate(cid, np.zeros(2), created_at=float(i), scores=rec))
    return db


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: {criterion: [(part, ok, detail), ...]}
ACCEPTANCE: dict[str, list] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        parts = ACCEPTANCE[key]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAIL'} ({info})" for name, good, info in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key} {detail}")

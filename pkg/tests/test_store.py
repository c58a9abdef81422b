import json

import pytest

from erevtune.bayes import PriorSpec, init_state, update
from erevtune.errors import StoreError
from erevtune.store import PosteriorStore


@pytest.fixture
def store(tmp_path):
    return PosteriorStore(tmp_path / "posteriors", PriorSpec())


class TestLoadSave:
    def test_missing_document_initializes_from_prior(self, store):
        state = store.load("new-van")
        assert state == init_state(PriorSpec(), "new-van")

    def test_roundtrip(self, store):
        state = update(init_state(PriorSpec(), "v1"), 63.0)
        store.save(state)
        loaded = store.load("v1")
        assert loaded.mu == state.mu
        assert loaded.kappa == state.kappa
        assert loaded.a == state.a
        assert loaded.b == state.b
        assert loaded.n_trips == 1

    def test_document_fields(self, store):
        store.save(init_state(PriorSpec(), "v2"))
        doc = json.loads((store.root / "v2.json").read_text())
        assert set(doc) >= {"vehicle_id", "mu", "kappa", "a", "b",
                            "n_trips", "updated_at"}

    def test_no_temp_file_left_behind(self, store):
        store.save(init_state(PriorSpec(), "v3"))
        assert not list(store.root.glob("*.tmp"))

    def test_corrupt_document_raises(self, store):
        store.save(init_state(PriorSpec(), "v4"))
        (store.root / "v4.json").write_text("{not json")
        with pytest.raises(StoreError):
            store.load("v4")

    def test_lower_bound_counter_persists(self, store):
        store.save(init_state(PriorSpec(), "v5"), lower_bound_trips=2)
        assert store.lower_bound_trips("v5") == 2
        # a later save without the argument keeps the recorded count
        store.save(update(init_state(PriorSpec(), "v5"), 70.0))
        assert store.lower_bound_trips("v5") == 2


class TestLocking:
    def test_lock_excludes_second_writer(self, tmp_path):
        first = PosteriorStore(tmp_path / "p", PriorSpec())
        second = PosteriorStore(tmp_path / "p", PriorSpec(),
                                lock_retries=2, lock_retry_delay_s=0.01)
        with first.lock("veh"):
            with pytest.raises(StoreError):
                with second.lock("veh"):
                    pass

    def test_lock_released_after_use(self, tmp_path):
        store = PosteriorStore(tmp_path / "p", PriorSpec(), lock_retries=1)
        with store.lock("veh"):
            pass
        with store.lock("veh"):
            pass

    def test_different_vehicles_do_not_contend(self, tmp_path):
        store = PosteriorStore(tmp_path / "p", PriorSpec(), lock_retries=1)
        with store.lock("a"):
            with store.lock("b"):
                pass

"""HTTP labeling service: endpoints, lifecycle, journal resume."""

import json
import threading
import time
import urllib.error
import urllib.request

import numpy as np
import pytest

from vaer.active import ALConfig, ALSession, encode_table
from vaer.corpus import attribute_sentences
from vaer.ir import fit_lsa, table_irs
from vaer.matcher import MatchConfig
from vaer.service import SessionService, make_server
from vaer.synth import make_benchmark
from vaer.vae import VaeTrainConfig, train_vae


@pytest.fixture(scope="module")
def world():
    bench = make_benchmark(
        seed=21, n_left=60, n_right=60, n_duplicates=18, train_size=40, test_size=20,
        edit_prob=0.3, drop_prob=0.1,
    )
    lsa = fit_lsa(attribute_sentences(bench.table_a, bench.table_b), dim=48)
    irs = np.concatenate([table_irs(bench.table_a, lsa), table_irs(bench.table_b, lsa)])
    vae = train_vae(irs, VaeTrainConfig(epochs=15, batch_size=16, seed=0, hidden_dim=48, latent_dim=12))
    left = encode_table(bench.table_a, lsa, vae)
    right = encode_table(bench.table_b, lsa, vae)
    return bench, left, right, vae


def _config(**overrides):
    base = dict(
        k=6, n_boot=8, batch_size=10, kde_samples=60, seed=4,
        match=MatchConfig(epochs=8, seed=2, holdout_fraction=0.0),
    )
    base.update(overrides)
    return ALConfig(**base)


@pytest.fixture
def server(world):
    bench, left, right, vae = world
    session = ALSession(left, right, vae, config=_config(), test_pairs=bench.test)
    service = SessionService(session, max_iterations=10)
    httpd = make_server(service, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base_url = f"http://127.0.0.1:{httpd.server_address[1]}"
    yield base_url, service
    httpd.shutdown()
    httpd.server_close()


def _get(url):
    with urllib.request.urlopen(url, timeout=10) as resp:
        return json.loads(resp.read().decode())


def _post(url, payload):
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(), headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(req, timeout=30) as resp:
        return json.loads(resp.read().decode())


class TestEndpoints:
    def test_status_shape(self, server):
        url, _ = server
        status = _get(url + "/session")
        assert status["lifecycle"] == "awaiting_labels"
        assert status["iteration"] == 0
        assert set(status["pools"]) == {"positive", "negative", "unlabeled"}
        assert isinstance(status["history"], list)
        assert status["metrics"] is not None

    def test_batch_shape(self, server):
        url, _ = server
        batch = _get(url + "/session/batch")
        assert 0 < len(batch["pairs"]) <= 10
        for pair in batch["pairs"]:
            assert pair["category"] in (
                "certain_positive", "certain_negative", "uncertain_positive", "uncertain_negative"
            )
            assert 0.0 <= pair["probability"] <= 1.0
            assert len(pair["left_values"]) == len(batch["columns"])
            assert len(pair["right_values"]) == len(batch["columns"])

    def test_full_batch_labels_trigger_retrain(self, server, world):
        bench, *_ = world
        truth = {(l, r) for l, r, _ in bench.duplicates}
        url, _ = server
        batch = _get(url + "/session/batch")
        labels = [
            {"pair_id": p["pair_id"], "label": int((p["left_id"], p["right_id"]) in truth)}
            for p in batch["pairs"]
        ]
        reply = _post(url + "/session/labels", labels)
        assert reply == {"status": "ok", "iteration": 1}
        status = _get(url + "/session")
        assert status["iteration"] == 1
        assert len(status["history"]) == 2  # bootstrap + one retrain
        new_batch = _get(url + "/session/batch")
        assert new_batch["iteration"] == 1
        old_keys = {(p["left_id"], p["right_id"]) for p in batch["pairs"]}
        new_keys = {(p["left_id"], p["right_id"]) for p in new_batch["pairs"]}
        assert not old_keys & new_keys

    def test_refresh_shows_identical_pending_batch(self, server):
        # A crashed/reloaded client must see the same outstanding batch.
        url, _ = server
        first = _get(url + "/session/batch")
        second = _get(url + "/session/batch")
        assert first == second

    def test_partial_batch_rejected(self, server):
        url, _ = server
        batch = _get(url + "/session/batch")
        labels = [{"pair_id": batch["pairs"][0]["pair_id"], "label": 1}]
        with pytest.raises(urllib.error.HTTPError) as err:
            _post(url + "/session/labels", labels)
        assert err.value.code == 400
        assert "full batch" in json.loads(err.value.read().decode())["error"]

    def test_status_answers_during_retraining(self, server, world):
        bench, *_ = world
        url, _ = server
        batch = _get(url + "/session/batch")
        labels = [{"pair_id": p["pair_id"], "label": 0} for p in batch["pairs"]]
        seen = []
        done = threading.Event()

        def poller():
            while not done.is_set():
                t0 = time.monotonic()
                status = _get(url + "/session")
                seen.append((status["lifecycle"], time.monotonic() - t0))
                time.sleep(0.005)

        thread = threading.Thread(target=poller)
        thread.start()
        _post(url + "/session/labels", labels)
        done.set()
        thread.join()
        assert seen, "status polls must have run during the retrain"
        assert max(dt for _, dt in seen) < 5.0

    def test_finish(self, server):
        url, _ = server
        reply = _post(url + "/session/finish", {})
        assert reply["status"] == "done"
        assert _get(url + "/session")["lifecycle"] == "done"
        assert _get(url + "/session/batch")["pairs"] == []

    def test_unknown_path_404(self, server):
        url, _ = server
        with pytest.raises(urllib.error.HTTPError) as err:
            _get(url + "/nothing")
        assert err.value.code == 404


class TestJournalResume:
    def test_resume_reproduces_pools(self, world, tmp_path):
        bench, left, right, vae = world
        truth = {(l, r) for l, r, _ in bench.duplicates}
        journal = tmp_path / "journal.jsonl"
        session = ALSession(left, right, vae, config=_config(), journal_path=journal)
        service = SessionService(session, max_iterations=10)
        for _ in range(2):
            batch = service.batch()
            labels = [
                {"pair_id": p["pair_id"], "label": int((p["left_id"], p["right_id"]) in truth)}
                for p in batch["pairs"]
            ]
            service.apply_labels(labels)

        resumed = ALSession.resume(journal, left, right, vae, config=_config())
        restarted = SessionService(resumed, max_iterations=10)
        assert restarted.status()["pools"] == service.status()["pools"]
        assert set(resumed.pools.positive) == set(session.pools.positive)
        assert set(resumed.pools.negative) == set(session.pools.negative)
        assert set(resumed.pools.unlabeled) == set(session.pools.unlabeled)

    def test_matcher_written_on_finish(self, world, tmp_path):
        bench, left, right, vae = world
        out = tmp_path / "matcher.json"
        session = ALSession(left, right, vae, config=_config())
        service = SessionService(session, max_iterations=10, matcher_out=str(out))
        service.finish()
        assert out.is_file()
        assert json.loads(out.read_text())["format"] == "vaer-matching-model"


def test_port_busy_raises_oserror(world):
    bench, left, right, vae = world
    session = ALSession(left, right, vae, config=_config())
    service = SessionService(session, max_iterations=10)
    first = make_server(service, port=0)
    try:
        with pytest.raises(OSError):
            make_server(service, port=first.server_address[1])
    finally:
        first.server_close()

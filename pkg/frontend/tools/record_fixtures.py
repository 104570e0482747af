"""Record wire fixtures from a live labeling session service.

Spins up the real HTTP service on an ephemeral port, captures the /session
and /session/batch payloads, labels the batch against the generator's ground
truth, captures the exact POST body and the refreshed /session payload, and
freezes everything under frontend/fixtures/ for the UI contract tests.
"""

import json
import threading
import urllib.request
from pathlib import Path

import numpy as np

from vaer.active import ALConfig, ALSession, encode_table
from vaer.corpus import attribute_sentences
from vaer.ir import fit_lsa, table_irs
from vaer.matcher import MatchConfig
from vaer.service import SessionService, make_server
from vaer.synth import make_benchmark
from vaer.vae import VaeTrainConfig, train_vae

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def main() -> None:
    bench = make_benchmark(
        seed=33, n_left=70, n_right=70, n_duplicates=20, train_size=40, test_size=20,
        edit_prob=0.4, drop_prob=0.15,
    )
    lsa = fit_lsa(attribute_sentences(bench.table_a, bench.table_b), dim=48)
    irs = np.concatenate([table_irs(bench.table_a, lsa), table_irs(bench.table_b, lsa)])
    vae = train_vae(irs, VaeTrainConfig(epochs=15, batch_size=16, seed=0, hidden_dim=48, latent_dim=12))
    left = encode_table(bench.table_a, lsa, vae)
    right = encode_table(bench.table_b, lsa, vae)
    config = ALConfig(
        k=8, n_boot=10, batch_size=10, kde_samples=60, seed=4,
        match=MatchConfig(epochs=8, seed=2, holdout_fraction=0.0),
    )
    session = ALSession(left, right, vae, config=config, test_pairs=bench.test)
    service = SessionService(session, max_iterations=10)
    httpd = make_server(service, port=0)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"

    def get(path: str) -> tuple[dict, str]:
        with urllib.request.urlopen(base + path, timeout=30) as resp:
            raw = resp.read().decode()
        return json.loads(raw), raw

    status, status_raw = get("/session")
    batch, batch_raw = get("/session/batch")
    assert len(batch["pairs"]) == 10, f"expected a 10-pair batch, got {len(batch['pairs'])}"

    truth = {(l, r) for l, r, _ in bench.duplicates}
    labels = [
        {"pair_id": p["pair_id"], "label": int((p["left_id"], p["right_id"]) in truth)}
        for p in batch["pairs"]
    ]
    # Compact separators: the exact bytes JSON.stringify produces, so the UI
    # contract test can compare byte-for-byte.
    post_body = json.dumps(labels, separators=(",", ":"))
    req = urllib.request.Request(
        base + "/session/labels",
        data=post_body.encode(),
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req, timeout=60) as resp:
        post_reply = json.loads(resp.read().decode())
    refreshed, refreshed_raw = get("/session")

    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "session.json").write_text(status_raw)
    (FIXTURES / "batch.json").write_text(batch_raw)
    (FIXTURES / "labels_post_body.json").write_text(post_body)
    (FIXTURES / "labels_reply.json").write_text(json.dumps(post_reply))
    (FIXTURES / "session_after_labels.json").write_text(refreshed_raw)
    httpd.shutdown()
    httpd.server_close()
    print(f"recorded fixtures into {FIXTURES}")


if __name__ == "__main__":
    main()

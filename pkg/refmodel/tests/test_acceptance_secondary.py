"""Secondary acceptance: reproduce the editing-generalization failure.

Builds the benchmark through the beliefbench CLI (external interfaces
only), trains the toy transformer on the emitted corpus, and evaluates
it over the probe protocol.  The criteria:

* post-edit generative accuracy on the edited prompt (s1r1) = 1.00;
* on the downstream-change subset, post-edit s1r2 accuracy <= 0.2 even
  though the referee's downstream argmax changed - the edit does not
  propagate to statistically entailed facts;
* edit locality: median |post - pre| probability change over the s2
  probes < 0.1.

Everything must finish well inside 30 minutes on CPU.
"""

import functools
import json
import statistics
import subprocess
import sys
import time

import pytest

from refmodel.train import TrainConfig, train

SEED = 77
FACTS = 400
CASES = 150
DEADLINE = time.monotonic() + 30 * 60


def criterion(name):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[ACCEPTANCE:secondary] {name}: FAIL")
                raise
            print(f"[ACCEPTANCE:secondary] {name}: PASS")

        return run

    return wrap


def _cli(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "beliefbench.cli", *args],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, f"beliefbench {' '.join(args)} failed:\n{proc.stderr}"
    return proc.stdout


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("secondary")
    paths = {name: str(out / name) for name in (
        "world.json.gz", "corpus.txt", "facts.tsv", "oracle.json.gz",
        "bench.jsonl", "report.json", "report.txt",
    )}
    _cli("world", "synth", "--subjects", "1000", "--relations", "6", "--objects", "10",
         "--seed", str(SEED), "--out", paths["world.json.gz"])
    # short documents force parametric recall instead of in-context copying
    _cli("corpus", "gen", "--world", paths["world.json.gz"], "--facts", str(FACTS),
         "--max-per-doc", "2", "--seed", str(SEED), "--out-dir", str(out))
    _cli("oracle", "fit", "--corpus", paths["corpus.txt"], "--world", paths["world.json.gz"],
         "--seed", str(SEED), "--out", paths["oracle.json.gz"])
    _cli("bench", "gen", "--world", paths["world.json.gz"], "--oracle", paths["oracle.json.gz"],
         "--facts", paths["facts.tsv"], "--cases", str(CASES), "--seed", str(SEED),
         "--out", paths["bench.jsonl"])

    ckpt = str(out / "ckpt")
    cfg = TrainConfig(n_layers=2, d_model=128, n_heads=4, d_ff=384, seq_len=64,
                      batch_size=32, lr=3e-3, epochs=40, seed=SEED)
    train(paths["corpus.txt"], paths["facts.tsv"], cfg, ckpt)
    paths["ckpt"] = ckpt
    paths["serve_cmd"] = f"{sys.executable} -m refmodel serve --checkpoint {ckpt}"
    return paths


@criterion("post-edit s1r1 accuracy = 1.00; downstream s1r2 accuracy <= 0.2")
def test_qualitative_reproduction(artifacts):
    _cli("eval", "run", "--bench", artifacts["bench.jsonl"],
         "--model", "exec:" + artifacts["serve_cmd"],
         "--subset", "downstream",
         "--report", artifacts["report.json"], "--report-text", artifacts["report.txt"])
    with open(artifacts["report.json"], encoding="utf-8") as fh:
        report = json.load(fh)
    entry = report["subsets"]["downstream_change"]
    assert entry["cases"] >= 10, "expected a meaningful downstream-change subset"
    assert entry["failed"] == 0

    # the referee's downstream answer really does change on this subset
    with open(artifacts["bench.jsonl"], encoding="utf-8") as fh:
        cases = [json.loads(ln) for ln in fh if ln.strip() and not ln.startswith("#")]
    down = [c for c in cases if c["flags"]["downstream_change"]]
    assert all(c["argmax_pre"]["s1r2"] != c["argmax_post"]["s1r2"] for c in down)

    post = entry["post"]["gen_acc"]
    assert post["s1r1"] == 1.0, f"edited prompt accuracy {post['s1r1']}"
    assert post["s1r2"] <= 0.2, f"downstream accuracy {post['s1r2']} (should collapse)"
    assert time.monotonic() < DEADLINE


class _Client:
    """Minimal line client for the probe protocol."""

    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            command.split(), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1,
        )
        self.n = 0

    def ask(self, record: dict) -> dict:
        self.n += 1
        record = {"id": f"x{self.n}", **record}
        self.proc.stdin.write(json.dumps(record) + "\n")
        self.proc.stdin.flush()
        while True:
            line = self.proc.stdout.readline()
            assert line, "server closed unexpectedly"
            resp = json.loads(line)
            if resp.get("id") == record["id"]:
                assert "error" not in resp, resp
                return resp

    def close(self):
        self.proc.stdin.close()
        self.proc.wait(timeout=10)


@criterion("edit locality: median |dp| over s2 probes < 0.1")
def test_edit_locality(artifacts):
    with open(artifacts["bench.jsonl"], encoding="utf-8") as fh:
        cases = [json.loads(ln) for ln in fh if ln.strip() and not ln.startswith("#")]
    client = _Client(artifacts["serve_cmd"])
    deltas = []
    try:
        for case in cases[:25]:
            probes = [
                {"kind": "next_object", **{k: case["prompts"][tag][k] for k in ("prompt", "candidate")}}
                for tag in ("s2r1", "s2r2")
            ]
            pre = [client.ask(p)["probability"] for p in probes]
            client.ask({"kind": "edit", "prompt": case["prompts"]["edit"]["prompt"],
                        "target": case["prompts"]["edit"]["target"],
                        "weight": case["weights"]["auto"] or 1})
            post = [client.ask(p)["probability"] for p in probes]
            client.ask({"kind": "revert"})
            deltas.extend(abs(a - b) for a, b in zip(post, pre))
    finally:
        client.close()
    median = statistics.median(deltas)
    print(f"s2 probe |dp|: median {median:.4f}, max {max(deltas):.3f}, n={len(deltas)}")
    assert median < 0.1
    assert time.monotonic() < DEADLINE

"""Line-oriented probe protocol.

One JSON object per line, matched by id, answers may arrive out of
order.  Query records:

    {"id": "...", "kind": "next_object", "prompt": "s r", "candidate": "o"}
    {"id": "...", "kind": "truth",       "prompt": "\"s r o\" is"}
    {"id": "...", "kind": "generate",    "prompt": "s r"}

Responses carry {"id", "probability"} or {"id", "text"}, or
{"id", "error"} on failure.  Two control records let the harness edit
the model between the pre and post phases:

    {"id": "...", "kind": "edit", "prompt": "s r", "target": "o*", "weight": 88}
    {"id": "...", "kind": "revert"}

both acknowledged with {"id": "..."}.

Transports: a subprocess's stdin/stdout (exec:CMD) or a TCP socket
(tcp:HOST:PORT); the record schema is identical.

Running ``python -m beliefbench.protocol --agent bayes ...`` serves a
built-in agent over stdio, which is how the test suite exercises the
exec transport end to end.
"""

from __future__ import annotations

import argparse
import json
import shlex
import socket
import subprocess
import sys
import time
from typing import IO, Iterable

from .agents import ProbeQuery, ProbeResponse, ProtocolError


def query_record(query: ProbeQuery) -> str:
    rec = {"id": query.id, "kind": query.kind, "prompt": query.prompt}
    if query.candidate is not None:
        rec["candidate"] = query.candidate
    return json.dumps(rec, ensure_ascii=False)


def response_from(rec: dict) -> ProbeResponse:
    return ProbeResponse(
        id=str(rec.get("id")),
        probability=rec.get("probability"),
        text=rec.get("text"),
        error=rec.get("error"),
    )


def serve(agent, instream: IO[str], outstream: IO[str]) -> None:
    """Answer queries from instream until EOF."""
    for raw in instream:
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            outstream.write(json.dumps({"id": None, "error": "bad json"}) + "\n")
            outstream.flush()
            continue
        kind = rec.get("kind")
        rid = rec.get("id")
        if kind == "edit":
            try:
                agent.apply_edit(rec["prompt"], rec["target"], float(rec["weight"]))
                out = {"id": rid}
            except Exception as exc:
                out = {"id": rid, "error": str(exc)}
        elif kind == "revert":
            try:
                agent.revert()
                out = {"id": rid}
            except Exception as exc:
                out = {"id": rid, "error": str(exc)}
        elif kind == "shutdown":
            outstream.write(json.dumps({"id": rid}) + "\n")
            outstream.flush()
            return
        else:
            resp = agent.answer(ProbeQuery(rid, kind, rec.get("prompt", ""), rec.get("candidate")))
            out = {"id": resp.id}
            if resp.probability is not None:
                out["probability"] = resp.probability
            if resp.text is not None:
                out["text"] = resp.text
            if resp.error is not None:
                out["error"] = resp.error
        outstream.write(json.dumps(out, ensure_ascii=False) + "\n")
        outstream.flush()


class _LineTransport:
    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def recv_line(self, timeout: float) -> str:
        raise NotImplementedError

    def close(self) -> None:
        pass


class _ExecTransport(_LineTransport):
    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def send_line(self, line: str) -> None:
        assert self.proc.stdin is not None
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def recv_line(self, timeout: float) -> str:
        assert self.proc.stdout is not None
        line = self.proc.stdout.readline()
        if not line:
            raise ProtocolError("model process closed its output")
        return line

    def close(self) -> None:
        if self.proc.stdin:
            self.proc.stdin.close()
        self.proc.wait(timeout=10)


class _TcpTransport(_LineTransport):
    def __init__(self, address: str):
        host, _, port = address.rpartition(":")
        self.sock = socket.create_connection((host, int(port)))
        self.reader = self.sock.makefile("r", encoding="utf-8")
        self.writer = self.sock.makefile("w", encoding="utf-8")

    def send_line(self, line: str) -> None:
        self.writer.write(line + "\n")
        self.writer.flush()

    def recv_line(self, timeout: float) -> str:
        self.sock.settimeout(timeout)
        line = self.reader.readline()
        if not line:
            raise ProtocolError("model connection closed")
        return line

    def close(self) -> None:
        self.sock.close()


class ExternalModel:
    """Client for a model speaking the probe protocol."""

    def __init__(self, spec: str, timeout: float = 120.0):
        if spec.startswith("exec:"):
            self.transport: _LineTransport = _ExecTransport(spec[len("exec:") :])
        elif spec.startswith("tcp:"):
            self.transport = _TcpTransport(spec[len("tcp:") :])
        else:
            raise ProtocolError(f"unknown model spec {spec!r} (use exec:CMD or tcp:HOST:PORT)")
        self.timeout = timeout
        self._counter = 0

    def ask(self, queries: list[ProbeQuery]) -> dict[str, ProbeResponse]:
        """Pipeline a batch and collect responses by id (any order)."""
        wanted = {q.id for q in queries}
        if len(wanted) != len(queries):
            raise ProtocolError("duplicate query ids in batch")
        for q in queries:
            self.transport.send_line(query_record(q))
        got: dict[str, ProbeResponse] = {}
        deadline = time.monotonic() + self.timeout
        while wanted - set(got):
            if time.monotonic() > deadline:
                break
            try:
                line = self.transport.recv_line(self.timeout)
            except ProtocolError:
                break
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            resp = response_from(rec)
            if resp.id in wanted:
                got[resp.id] = resp
        return got

    def _control(self, record: dict) -> None:
        self._counter += 1
        rid = f"ctl-{self._counter}"
        record["id"] = rid
        self.transport.send_line(json.dumps(record, ensure_ascii=False))
        deadline = time.monotonic() + self.timeout
        while time.monotonic() <= deadline:
            line = self.transport.recv_line(self.timeout).strip()
            if not line:
                continue
            rec = json.loads(line)
            if str(rec.get("id")) == rid:
                if rec.get("error"):
                    raise ProtocolError(f"control failed: {rec['error']}")
                return
        raise ProtocolError("timed out waiting for control ack")

    def apply_edit(self, prompt: str, target: str, weight: float) -> None:
        self._control({"kind": "edit", "prompt": prompt, "target": target, "weight": weight})

    def revert(self) -> None:
        self._control({"kind": "revert"})

    def close(self) -> None:
        self.transport.close()


class LocalClient:
    """Adapter giving built-in agents the ExternalModel interface."""

    def __init__(self, agent):
        self.agent = agent

    def ask(self, queries: list[ProbeQuery]) -> dict[str, ProbeResponse]:
        return {q.id: self.agent.answer(q) for q in queries}

    def apply_edit(self, prompt: str, target: str, weight: float) -> None:
        self.agent.apply_edit(prompt, target, weight)

    def revert(self) -> None:
        self.agent.revert()

    def close(self) -> None:
        pass


def _main(argv: Iterable[str] | None = None) -> int:
    """Serve a built-in agent over stdio, or over TCP with --listen."""
    from .corpus import load_corpus_sentences
    from .language import Language
    from .oracle import OracleState
    from .world import WorldModel
    from .agents import BayesAgent, MemorizerAgent, StaleAgent

    parser = argparse.ArgumentParser(prog="beliefbench.protocol")
    parser.add_argument("--agent", choices=["bayes", "memorizer", "stale"], required=True)
    parser.add_argument("--world", required=True)
    parser.add_argument("--oracle")
    parser.add_argument("--corpus")
    parser.add_argument("--listen", metavar="HOST:PORT", help="serve one TCP connection instead of stdio")
    args = parser.parse_args(argv)

    language = Language(WorldModel.load(args.world).vocabulary())
    if args.agent == "bayes":
        if not args.oracle:
            parser.error("--agent bayes requires --oracle")
        agent = BayesAgent(OracleState.load(args.oracle), language)
    else:
        if not args.corpus:
            parser.error(f"--agent {args.agent} requires --corpus")
        sentences = load_corpus_sentences(args.corpus, language)
        cls = MemorizerAgent if args.agent == "memorizer" else StaleAgent
        agent = cls(sentences, language)
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        with socket.create_server((host or "127.0.0.1", int(port))) as server:
            print(f"listening on {server.getsockname()[0]}:{server.getsockname()[1]}", flush=True)
            conn, _ = server.accept()
            with conn, conn.makefile("r", encoding="utf-8") as rd, conn.makefile("w", encoding="utf-8") as wr:
                serve(agent, rd, wr)
        return 0
    serve(agent, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    raise SystemExit(_main())

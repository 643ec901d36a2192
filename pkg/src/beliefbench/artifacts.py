"""Shared plumbing for artifact files: headers, config hashes, atomic writes.

Every file the pipeline emits starts with a header carrying the tool
version, a hash of the effective configuration, and the seed, so any
artifact can be traced back to the exact run that produced it.  Text
artifacts use '# key=value' comment lines; JSON artifacts use a
top-level "header" object.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import os
from typing import Any

TOOL_VERSION = "0.1.0"


def config_hash(config: dict[str, Any]) -> str:
    """Stable short hash over the effective configuration."""
    canon = "\n".join(f"{k}={config[k]}" for k in sorted(config))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def header_lines(config: dict[str, Any], seed: Any) -> list[str]:
    """Comment-style header block for line-oriented text artifacts."""
    lines = [
        f"# beliefbench {TOOL_VERSION}",
        f"# config_hash={config_hash(config)}",
        f"# seed={seed}",
    ]
    lines.extend(f"# {k}={config[k]}" for k in sorted(config))
    return lines


def header_dict(config: dict[str, Any], seed: Any, fmt: str) -> dict[str, Any]:
    """Header object for JSON artifacts."""
    return {
        "format": fmt,
        "tool_version": TOOL_VERSION,
        "config_hash": config_hash(config),
        "seed": seed,
        "config": {k: config[k] for k in sorted(config)},
    }


def is_header_line(line: str) -> bool:
    return line.startswith("#")


def write_text(path: str, lines: list[str]) -> None:
    """Write lines atomically: temp file in the same directory, then rename.

    A failure mid-write leaves no partial artifact behind.
    """
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def read_text(path: str) -> list[str]:
    """All non-header lines of a text artifact."""
    with open(path, encoding="utf-8") as fh:
        return [ln.rstrip("\n") for ln in fh if not is_header_line(ln)]


def read_header(path: str) -> dict[str, str]:
    """Parse '# key=value' header lines into a dict."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for ln in fh:
            if not is_header_line(ln):
                break
            body = ln[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                out[k] = v
    return out


def write_json(path: str, payload: dict[str, Any]) -> None:
    data = json.dumps(payload, ensure_ascii=False, separators=(",", ":"), sort_keys=True)
    tmp = path + ".tmp"
    try:
        if path.endswith(".gz"):
            with gzip.open(tmp, "wt", encoding="utf-8") as fh:
                fh.write(data)
        else:
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def read_json(path: str) -> dict[str, Any]:
    if path.endswith(".gz"):
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            return json.load(fh)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def stable_rng_seed(seed: int, *key: Any) -> list[int]:
    """Entropy words for a named substream of a master seed.

    Derived by hashing the key parts, so substreams are independent of
    iteration order and stable across platforms and processes.
    """
    tag = "\x1f".join(str(part) for part in key)
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=16).digest()
    words = [int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4)]
    return [int(seed) & 0xFFFFFFFF] + words

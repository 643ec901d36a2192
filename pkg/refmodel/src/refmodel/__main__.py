"""CLI: train a checkpoint, apply a one-off edit, or serve probes."""

from __future__ import annotations

import argparse
import logging
import sys

from .edit import EditConfig, apply_edit
from .serve import ProbeServer
from .train import TrainConfig, load_checkpoint, train


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="refmodel")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train on a corpus file")
    tr.add_argument("--corpus", required=True)
    tr.add_argument("--facts", help="facts manifest for accuracy reporting and object pools")
    tr.add_argument("--out", required=True)
    tr.add_argument("--layers", type=int, default=4)
    tr.add_argument("--width", type=int, default=128)
    tr.add_argument("--heads", type=int, default=4)
    tr.add_argument("--ff", type=int, default=512)
    tr.add_argument("--seq-len", type=int, default=128)
    tr.add_argument("--batch-size", type=int, default=16)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--epochs", type=int, default=4)
    tr.add_argument("--seed", type=int, default=0)

    ed = sub.add_parser("edit", help="apply one edit and report the new completion")
    ed.add_argument("--checkpoint", required=True)
    ed.add_argument("--prompt", required=True)
    ed.add_argument("--target", required=True)
    ed.add_argument("--steps", type=int, default=40)
    ed.add_argument("--lr", type=float, default=0.05)

    sv = sub.add_parser("serve", help="answer the probe protocol on stdio")
    sv.add_argument("--checkpoint", required=True)
    sv.add_argument("--edit-steps", type=int, default=40)
    sv.add_argument("--edit-lr", type=float, default=0.05)

    args = parser.parse_args(argv)
    if args.command == "train":
        cfg = TrainConfig(
            n_layers=args.layers, d_model=args.width, n_heads=args.heads, d_ff=args.ff,
            seq_len=args.seq_len, batch_size=args.batch_size, lr=args.lr,
            epochs=args.epochs, seed=args.seed,
        )
        train(args.corpus, args.facts, cfg, args.out)
        print(f"wrote checkpoint to {args.out}")
        return 0
    if args.command == "edit":
        model, tok, _ = load_checkpoint(args.checkpoint)
        handle = apply_edit(model, tok, args.prompt, args.target, EditConfig(steps=args.steps, lr=args.lr))
        stop = {tok.eos} | {tok.id_of[t] for t in (".", '"') if t in tok.id_of}
        decoded = tok.decode(model.greedy_decode([tok.bos] + tok.encode(args.prompt), stop=stop))
        print(f"converged={handle.converged} completion={decoded!r}")
        return 0
    if args.command == "serve":
        model, tok, meta = load_checkpoint(args.checkpoint)
        server = ProbeServer(model, tok, meta, EditConfig(steps=args.edit_steps, lr=args.edit_lr))
        server.serve(sys.stdin, sys.stdout)
        return 0
    return 2


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()

"""Line protocol for scoring triples in an external process.

The harness starts the scorer, sends ``##PROTO 1`` and expects it
echoed back.  Each batch is a run of ``head<TAB>relation<TAB>tail``
lines closed by ``##END_BATCH``; the scorer answers with one decimal
score per triple, in order, and flushes.

This module also runs as a reference scorer::

    python -m kgbench.protocol constant [--value 0.0]
    python -m kgbench.protocol model PATH
"""

from __future__ import annotations

import argparse
import queue
import subprocess
import sys
import threading

import numpy as np

from .errors import ProtocolError

HANDSHAKE = "##PROTO 1"
END_BATCH = "##END_BATCH"
_EOF = object()


class ExternalScorer:
    """Scorer backed by a subprocess speaking the line protocol.

    Calls are serialised, so one instance is safe to share between
    threads.  ``timeout`` bounds the wait for each response line.
    """

    def __init__(self, command, graph, timeout: float = 60.0):
        self.graph = graph
        self.timeout = timeout
        self.batches = 0
        self._lock = threading.Lock()
        self._ents = [str(e) for e in graph.entities]
        self._rels = list(graph.schema.names)
        try:
            self.proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot start scorer {command!r}: {exc}") from None
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._send(HANDSHAKE + "\n")
        reply = self._read("handshake")
        if reply != HANDSHAKE:
            self._kill()
            raise ProtocolError(f"handshake failed: expected {HANDSHAKE!r}, got {reply!r}")

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line.rstrip("\r\n"))
        self._lines.put(_EOF)

    def _send(self, text: str):
        try:
            self.proc.stdin.write(text)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError):
            self._kill()
            raise ProtocolError(f"scorer exited early (batch {self.batches})") from None

    def _read(self, where):
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self._kill()
            raise ProtocolError(f"scorer timed out in {where}") from None
        if line is _EOF:
            self._kill()
            raise ProtocolError(f"scorer exited early in {where} (exit code {self.proc.poll()})")
        return line

    def _kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
        self.proc.wait()

    def __call__(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64).reshape(-1, 3)
        with self._lock:
            batch = self.batches
            self.batches += 1
            ents, rels = self._ents, self._rels
            text = "".join(f"{ents[h]}\t{rels[r]}\t{ents[t]}\n" for h, r, t in ids.tolist())
            self._send(text + END_BATCH + "\n")
            out = np.empty(len(ids))
            for i in range(len(ids)):
                line = self._read(f"batch {batch}")
                try:
                    out[i] = float(line)
                except ValueError:
                    self._kill()
                    raise ProtocolError(f"non-numeric response {line!r} in batch {batch}") from None
            return out

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=self.timeout)
            except subprocess.TimeoutExpired:
                self._kill()
        self._reader.join(timeout=self.timeout)
        extra = []
        while not self._lines.empty():
            line = self._lines.get_nowait()
            if line is not _EOF:
                extra.append(line)
        if extra:
            raise ProtocolError(f"scorer sent {len(extra)} unrequested line(s) after batch {self.batches - 1}")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._kill()


def evaluate_external(command, split, ks=(1, 3, 10), timeout: float = 60.0, **kwargs):
    """Evaluate an external scorer command on ``split`` like :func:`kgbench.metrics.evaluate`."""
    from .metrics import evaluate

    with ExternalScorer(command, split.graph, timeout) as scorer:
        return evaluate(scorer, split, ks, **kwargs)


def serve(score_names, stdin=None, stdout=None):
    """Answer protocol requests on stdin using ``score_names(list of (h, r, t))``."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    first = stdin.readline().rstrip("\r\n")
    if first != HANDSHAKE:
        raise SystemExit(f"expected {HANDSHAKE!r}, got {first!r}")
    stdout.write(HANDSHAKE + "\n")
    stdout.flush()
    batch = []
    for line in stdin:
        line = line.rstrip("\r\n")
        if line == END_BATCH:
            if batch:
                stdout.write("".join(f"{float(s)!r}\n" for s in score_names(batch)))
            stdout.flush()
            batch = []
        else:
            batch.append(tuple(line.split("\t")))


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python -m kgbench.protocol", description="reference protocol scorers")
    sub = parser.add_subparsers(dest="kind", required=True)
    const = sub.add_parser("constant", help="score every triple with one value")
    const.add_argument("--value", type=float, default=0.0)
    model = sub.add_parser("model", help="serve a saved TransE/TransR model")
    model.add_argument("path")
    args = parser.parse_args(argv)

    if args.kind == "constant":
        serve(lambda batch: [args.value] * len(batch))
        return
    from .embed import load_model

    m = load_model(args.path)
    ent = {n: i for i, n in enumerate(m.entity_names)}
    rel = {n: i for i, n in enumerate(m.relation_names)}

    def score(batch):
        ids = np.array([(ent[h], rel[r], ent[t]) for h, r, t in batch], dtype=np.int64)
        return m(ids)

    serve(score)


if __name__ == "__main__":
    main()

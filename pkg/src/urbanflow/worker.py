"""Reference worker for the external-executor process protocol.

Reads one framed request (header + input envelopes) from stdin, interprets
the declarative op document, and writes the framed response to stdout.
Deployments swap in their own worker as long as it speaks the same frames;
see docs/formats.md.

    python -m urbanflow.worker [--data-dir DIR]
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

from .engine import ExecutorFailure, encode_response, interpret_op, read_frame
from .layers import LayerError, deserialize_layer
from .ops import OpError


def serve_once(stdin: io.BufferedReader, stdout: io.BufferedWriter,
               data_dir: Path | None = None) -> int:
    try:
        header = json.loads(read_frame(stdin).decode("utf-8"))
        inputs = [deserialize_layer(read_frame(stdin)) for _ in range(int(header["inputs"]))]
        doc = json.loads(header["code"])

        def read_file(rel: str) -> bytes:
            if data_dir is None:
                raise ExecutorFailure("worker has no data directory")
            return (data_dir / rel).read_bytes()

        outputs = interpret_op(doc, inputs, read_file)
    except (ExecutorFailure, OpError, LayerError, KeyError, IndexError,
            ValueError, TypeError, json.JSONDecodeError) as e:
        stdout.write(encode_response([], f"{type(e).__name__}: {e}", status="error"))
        stdout.flush()
        return 0
    stdout.write(encode_response(outputs, ""))
    stdout.flush()
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="dataflow node worker")
    parser.add_argument("--data-dir", type=Path, default=None)
    args = parser.parse_args(argv)
    return serve_once(sys.stdin.buffer, sys.stdout.buffer, args.data_dir)


if __name__ == "__main__":
    sys.exit(main())

"""Reference predictor speaking the JSON-lines protocol.

Echoes one column of each incoming row, optionally reduced to a boolean.
Run it as ``python3 -m fairaudit.stub_model --column NAME`` to answer each
request with the raw cell, add ``--ge N`` to answer with the boolean
``int(cell) >= N``, or ``--eq VALUE`` to answer with ``cell == VALUE``.

This doubles as executable protocol documentation: readiness line first,
then one ``{"id", "prediction"}`` response per ``{"id", "row"}`` request.
"""

from __future__ import annotations

import argparse
import json
import sys


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python3 -m fairaudit.stub_model",
        description="Column-echo predictor for audits and tests.",
    )
    parser.add_argument("--column", required=True, help="row column to read")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument(
        "--ge", type=int, metavar="N",
        help="answer with the boolean int(cell) >= N instead of the cell",
    )
    mode.add_argument(
        "--eq", metavar="VALUE",
        help="answer with the boolean cell == VALUE instead of the cell",
    )
    return parser


def predict(cell: str, args: argparse.Namespace):
    if args.ge is not None:
        return int(cell) >= args.ge
    if args.eq is not None:
        return cell == args.eq
    return cell


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = sys.stdout
    print(json.dumps({"ready": True}), file=out, flush=True)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            request_id = request["id"]
            cell = request["row"][args.column]
            prediction = predict(cell, args)
        except (KeyError, ValueError, TypeError) as exc:
            print(f"stub_model: bad request {line!r}: {exc}", file=sys.stderr)
            return 3
        print(json.dumps({"id": request_id, "prediction": prediction}),
              file=out, flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())

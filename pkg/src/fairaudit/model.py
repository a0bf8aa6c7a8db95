"""Prediction sources: embedded CSV columns or an external model process.

An audit needs a prediction per row. In CSV mode the predictions are
already columns of the dataset and the positive/score expressions read
them directly. In model mode an external predictor is spawned and queried
row by row; the tool never loads model code in-process, it only talks a
wire protocol. A report records which mode produced it, since live model
answers are harder to fabricate than a prediction column.

Wire protocol, line-delimited JSON over the child's stdin/stdout, UTF-8,
``\\n`` terminated, one object per line:

* child announces itself with ``{"ready": true}`` before the first request
* request: ``{"id": N, "row": {column: string, ...}}`` with ids strictly
  increasing across the handle's lifetime
* response: ``{"id": N, "prediction": scalar}`` where the scalar is a
  string, number, or boolean; unknown extra fields are ignored
* responses arrive in request order; an out-of-order id is an error

Timeouts (default 30 s each, configurable) bound the wait for the
readiness line and for each response, so an audit cannot hang on a wedged
model.
"""

from __future__ import annotations

import json
import os
import selectors
import subprocess
import threading
import time
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional, Union

from .dataset import Row

Prediction = Union[str, int, float, bool]

DEFAULT_HANDSHAKE_TIMEOUT = 30.0
DEFAULT_REQUEST_TIMEOUT = 30.0

_READ_CHUNK = 65536


class ModelError(Exception):
    """Base class for prediction-source failures."""


class SpawnError(ModelError):
    """The model command could not be started."""


class HandshakeError(ModelError):
    """The model never announced readiness."""


class ProtocolError(ModelError):
    """The model sent something the protocol does not allow."""


class ModelCrashError(ModelError):
    """The model process died mid-conversation."""


class RequestTimeoutError(ModelError):
    """A response did not arrive within the configured deadline."""


@dataclass(frozen=True)
class CsvSource:
    """Predictions are embedded in the dataset; expressions read rows."""


@dataclass(frozen=True)
class ModelSource:
    """Predictions come from an external process speaking the protocol."""

    command: tuple[str, ...]
    handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT
    request_timeout: float = DEFAULT_REQUEST_TIMEOUT

    def __post_init__(self):
        if not self.command:
            raise ModelError("model command must not be empty")


PredictionSource = Union[CsvSource, ModelSource]


class ModelHandle:
    """One protocol channel to a running predictor process.

    Requests on a handle are serialized: a batch must finish before the
    next starts. Use :func:`start_model` to obtain a live handle; close it
    (or use it as a context manager) to end the child.
    """

    def __init__(self, command: tuple[str, ...], process: subprocess.Popen,
                 request_timeout: float):
        self._command = command
        self._process = process
        self._request_timeout = request_timeout
        self._buffer = bytearray()
        self._selector = selectors.DefaultSelector()
        self._selector.register(process.stdout.fileno(), selectors.EVENT_READ)
        self._next_id = 1
        self._closed = False

    # -- line transport

    def _read_line(self, deadline: float, what: str) -> bytes:
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                line = bytes(self._buffer[:newline])
                del self._buffer[: newline + 1]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise RequestTimeoutError(f"timed out waiting for {what}")
            if self._selector.select(remaining):
                chunk = os.read(self._process.stdout.fileno(), _READ_CHUNK)
                if not chunk:
                    status = self._process.wait()
                    raise ModelCrashError(
                        f"model exited with status {status} while {what} was pending"
                    )
                self._buffer.extend(chunk)

    def _write_lines(self, payloads: list[bytes]) -> Optional[Exception]:
        try:
            stdin = self._process.stdin
            for payload in payloads:
                stdin.write(payload)
            stdin.flush()
            return None
        except (BrokenPipeError, OSError) as exc:
            return exc

    # -- protocol

    def handshake(self, timeout: float) -> None:
        deadline = time.monotonic() + timeout
        try:
            line = self._read_line(deadline, "the readiness line")
        except RequestTimeoutError:
            raise HandshakeError(
                f"model sent no readiness line within {timeout:g}s"
            ) from None
        except ModelCrashError as exc:
            raise HandshakeError(str(exc)) from None
        message = _parse_line(line)
        if message.get("ready") is not True:
            raise ProtocolError(
                f"expected a readiness line, got: {line.decode('utf-8', 'replace')!r}"
            )

    def predict_rows(self, rows: Sequence[Row]) -> list[Prediction]:
        """Send one request per row, return predictions in row order."""
        if self._closed:
            raise ModelError("model handle is closed")
        if not rows:
            return []
        ids = []
        payloads = []
        for row in rows:
            request_id = self._next_id
            self._next_id += 1
            ids.append(request_id)
            payloads.append(
                json.dumps({"id": request_id, "row": dict(row)}).encode("utf-8")
                + b"\n"
            )

        # Writing everything from a side thread lets the child interleave
        # responses without deadlocking either pipe.
        write_error: list[Optional[Exception]] = [None]

        def pump():
            write_error[0] = self._write_lines(payloads)

        writer = threading.Thread(target=pump, daemon=True)
        writer.start()
        try:
            predictions = []
            for request_id in ids:
                deadline = time.monotonic() + self._request_timeout
                line = self._read_line(deadline, f"the response to request {request_id}")
                predictions.append(_parse_response(line, request_id))
        finally:
            # Bounded join: a wedged child can leave the writer blocked on a
            # full pipe; the daemon thread is abandoned rather than waited on.
            writer.join(timeout=1.0)
        if write_error[0] is not None and len(predictions) != len(ids):
            status = self._process.poll()
            raise ModelCrashError(
                f"model stopped reading requests (exit status {status}): {write_error[0]}"
            )
        return predictions

    def close(self) -> Optional[int]:
        """End the child: EOF on stdin, then escalate if it lingers."""
        if self._closed:
            return self._process.poll()
        self._closed = True
        self._selector.close()
        try:
            self._process.stdin.close()
        except OSError:
            pass
        try:
            return self._process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._process.terminate()
            try:
                return self._process.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._process.kill()
                return self._process.wait()

    def __enter__(self) -> "ModelHandle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _parse_line(line: bytes) -> dict:
    try:
        message = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ProtocolError(
            f"model sent a malformed line: {line.decode('utf-8', 'replace')!r}"
        ) from None
    if not isinstance(message, dict):
        raise ProtocolError(
            f"model sent a non-object line: {line.decode('utf-8', 'replace')!r}"
        )
    return message


def _parse_response(line: bytes, expected_id: int) -> Prediction:
    message = _parse_line(line)
    got_id = message.get("id")
    if got_id != expected_id:
        raise ProtocolError(
            f"response id {got_id!r} does not match expected id {expected_id}"
        )
    if "prediction" not in message:
        raise ProtocolError(f"response {expected_id} carries no prediction field")
    prediction = message["prediction"]
    if isinstance(prediction, bool) or isinstance(prediction, (str, int, float)):
        return prediction
    raise ProtocolError(
        f"prediction of response {expected_id} is not a scalar: {prediction!r}"
    )


def start_model(
    command: Sequence[str],
    *,
    handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT,
    request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
) -> ModelHandle:
    """Spawn the predictor and wait for its readiness line."""
    argv = tuple(command)
    if not argv:
        raise SpawnError("model command must not be empty")
    try:
        process = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )
    except OSError as exc:
        raise SpawnError(f"cannot start model command {argv!r}: {exc}") from exc
    handle = ModelHandle(argv, process, request_timeout)
    try:
        handle.handshake(handshake_timeout)
    except ModelError:
        handle.close()
        raise
    return handle


def stringify_prediction(prediction: Prediction) -> str:
    """Render a model scalar the way a CSV cell would hold it.

    Booleans become "true"/"false", floats use their shortest exact repr,
    so downstream expressions can re-coerce them without loss.
    """
    if isinstance(prediction, bool):
        return "true" if prediction else "false"
    if isinstance(prediction, float):
        return repr(prediction)
    if isinstance(prediction, int):
        return str(prediction)
    return prediction

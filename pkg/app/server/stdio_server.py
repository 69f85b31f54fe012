"""Newline-delimited JSON tuner loop over standard input/output.

stdout carries protocol frames only; logs go to stderr and the log file.
"""
import json
import sys
from typing import IO, Optional, TextIO

from app.server.protocol import handle, parse_line
from app.service.tuner_service import TunerService
from config.logger_config import logger


def write_frame(stream: TextIO, response: dict) -> None:
    stream.write(json.dumps(response, separators=(",", ":")) + "\n")
    stream.flush()


def serve_stdio(stdin: Optional[IO] = None, stdout: Optional[TextIO] = None,
                service: Optional[TunerService] = None) -> int:
    """Answer one response line per request line until EOF; returns the number of requests handled.

    `stdin` may yield text or bytes; the process stdin is read as bytes so a
    frame that is not UTF-8 gets an error response instead of ending the loop.
    """
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout
    service = service if service is not None else TunerService()
    handled = 0
    logger.info("Stdio: tuner loop started")
    for line in stdin:
        if not line.strip():
            continue
        message, error = parse_line(line)
        response = error if error else handle(service, message)
        write_frame(stdout, response)
        handled += 1
    logger.info(f"Stdio: input closed after {handled} requests")
    return handled

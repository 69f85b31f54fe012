"""Transport-independent handling of tuner protocol messages.

Every request is an object with `type`, `session` and `seq`; every response
echoes them and carries either `ok: true` with the payload or `ok: false`
with a structured `error`.
"""
import json
from typing import Any, Dict, Tuple, Union

from app.exceptions import (InvalidInputError, InvalidSpecError, NumericalFailureError,
                            ProtocolError, StaleRoundError)
from app.service.tuner_service import TunerService
from config.logger_config import logger

MESSAGE_TYPES = ("init", "suggest", "observe", "snapshot", "close")

HTTP_STATUS = {
    "invalid_input": 400,
    "invalid_spec": 400,
    "protocol_error": 400,
    "out_of_order": 400,
    "feedback_not_requested": 400,
    "session_exists": 400,
    "session_closed": 400,
    "malformed_message": 400,
    "unknown_session": 404,
    "stale_round": 409,
    "numerical_failure": 500,
    "internal_error": 500,
}


def error_code(error: Exception) -> str:
    if isinstance(error, ProtocolError):
        return error.code
    if isinstance(error, InvalidInputError):
        return "invalid_input"
    if isinstance(error, InvalidSpecError):
        return "invalid_spec"
    if isinstance(error, NumericalFailureError):
        return "numerical_failure"
    if isinstance(error, (KeyError, TypeError, ValueError)):
        return "invalid_input"
    return "internal_error"


def status_for(response: Dict[str, Any]) -> int:
    if response.get("ok"):
        return 200
    return HTTP_STATUS.get(response.get("error", {}).get("code"), 500)


def _dispatch(service: TunerService, message: Dict[str, Any]) -> Dict[str, Any]:
    kind = message.get("type")
    if kind not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {kind!r}; expected one of {list(MESSAGE_TYPES)}",
                            code="malformed_message")
    seq = message.get("seq")
    if not isinstance(seq, int) or isinstance(seq, bool):
        raise ProtocolError(f"message needs an integer 'seq', got {seq!r}", code="malformed_message")
    if kind == "init":
        session = service.init(message)
        session.check_seq(message["seq"])
        return {"candidates": len(session.grid), "round": session.round}
    session = service.get(message.get("session"))
    session.check_seq(message["seq"])
    if kind == "suggest":
        return session.suggest()
    if kind == "observe":
        if "round" not in message or "reward" not in message:
            raise ProtocolError("observe needs 'round' and 'reward'", code="malformed_message")
        return session.observe(message["round"], message["reward"])
    if kind == "snapshot":
        return session.snapshot()
    return service.close(session.session_id)


def handle(service: TunerService, message: Any) -> Dict[str, Any]:
    """Apply one request to the service; never raises"""
    if not isinstance(message, dict):
        return error_response({}, ProtocolError("message must be a JSON object", code="malformed_message"))
    try:
        payload = _dispatch(service, message)
    except StaleRoundError as e:
        logger.warning(f"Tuner: stale request {message.get('type')} seq={message.get('seq')}: {e}")
        return error_response(message, e)
    except (ProtocolError, InvalidInputError, InvalidSpecError) as e:
        logger.warning(f"Tuner: rejected {message.get('type')} seq={message.get('seq')}: {e}")
        return error_response(message, e)
    except Exception as e:
        logger.error(f"Tuner: {message.get('type')} failed for session {message.get('session')!r}: {e}")
        return error_response(message, e)
    response = {"ok": True, "type": message["type"], "session": message.get("session"),
                "seq": message.get("seq")}
    response.update(payload)
    return response


def error_response(message: Dict[str, Any], error: Exception) -> Dict[str, Any]:
    return {
        "ok": False,
        "type": message.get("type"),
        "session": message.get("session"),
        "seq": message.get("seq"),
        "error": {"code": error_code(error), "message": str(error)},
    }


def parse_line(line: Union[str, bytes]) -> Tuple[Any, Dict[str, Any]]:
    """Decode one NDJSON frame into (message, error response or empty dict)"""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as e:
            return None, error_response({}, ProtocolError(f"frame is not UTF-8: {e}", code="malformed_message"))
    try:
        return json.loads(line), {}
    except json.JSONDecodeError as e:
        return None, error_response({}, ProtocolError(f"invalid JSON: {e}", code="malformed_message"))

from flask import Blueprint, current_app, jsonify, request

from app.exceptions import ProtocolError
from app.server.protocol import error_response, handle, status_for
from config.logger_config import logger

# Create blueprint
api_bp = Blueprint('api', __name__)


@api_bp.route('/health', methods=['GET'])
def health():
    """Liveness check with the number of open sessions"""
    service = current_app.config['TUNER_SERVICE']
    return jsonify({"status": "ok", "sessions": len(service.sessions)}), 200


@api_bp.route('/api/tuner', methods=['POST'])
def tuner_message():
    """Apply one protocol message given as the JSON body"""
    message = request.get_json(silent=True)
    if message is None:
        logger.warning("API: POST /api/tuner with a missing or invalid JSON body")
        response = error_response({}, ProtocolError("request body must be JSON", code="malformed_message"))
        return jsonify(response), 400
    logger.info(f"API: POST /api/tuner {message.get('type') if isinstance(message, dict) else '?'}")
    response = handle(current_app.config['TUNER_SERVICE'], message)
    status = status_for(response)
    if status >= 500:
        logger.error(f"API: tuner request failed: {response['error']}")
    return jsonify(response), status

from flask import Flask

from app.service.tuner_service import TunerService
from config.logger_config import logger


def create_app(service: TunerService = None):
    """Create Flask app exposing the tuner protocol over HTTP"""
    logger.info("Creating Flask application")
    app = Flask(__name__)
    app.config['TUNER_SERVICE'] = service if service is not None else TunerService()

    # Register blueprints
    logger.info("Registering API blueprints")
    from app.server.endpoints import api_bp
    app.register_blueprint(api_bp)
    logger.info("Flask application created successfully")

    return app

import json
from typing import Dict

from app.exceptions import InvalidSpecError, PersistenceError
from config.logger_config import logger


class JSONReader:
    """
    Reads an experiment or tuner config file from disk
    """
    def __init__(self, file_path: str):
        self.file_path = file_path

    def read_json(self) -> Dict:
        """
        Read JSON file from disk

        Raises:
            PersistenceError: if the file is missing or unreadable
            InvalidSpecError: if the content is not a JSON object
        """
        try:
            with open(self.file_path, 'r') as file:
                data = json.load(file)
        except FileNotFoundError as e:
            logger.error(f"Config: file not found: {self.file_path}")
            raise PersistenceError(f"config file not found: {e}", self.file_path) from e
        except json.JSONDecodeError as e:
            logger.error(f"Config: error decoding JSON from file {self.file_path}: {e}")
            raise InvalidSpecError(f"{self.file_path}: invalid JSON ({e})") from e
        except OSError as e:
            logger.error(f"Config: could not read {self.file_path}: {e}")
            raise PersistenceError(f"could not read config: {e}", self.file_path) from e
        if not isinstance(data, dict):
            raise InvalidSpecError(f"{self.file_path}: top level must be an object, got {type(data).__name__}")
        logger.info(f"Config: loaded {self.file_path}")
        return data

# fluxlab/LogManager.py
import logging
from logging.handlers import RotatingFileHandler
from typing import Optional

DEFAULT_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


class LogManager:
    def __init__(self, log_path: Optional[str], log_level: str,
                 log_format: Optional[str] = None,
                 max_log_size_mb: float = 10, backup_count: int = 5):
        self.log_path = log_path
        self.log_level = getattr(logging, log_level.upper())
        self.log_format = log_format or DEFAULT_FORMAT
        self.max_bytes = int(max_log_size_mb * 1024 * 1024)
        self.backup_count = backup_count
        self.logger = self._setup_logging()

    def _setup_logging(self) -> logging.Logger:
        logger = logging.getLogger('fluxlab')
        logger.setLevel(self.log_level)
        logger.propagate = False

        # Re-running main() in one process must not stack handlers
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()

        if self.log_path:
            file_handler = RotatingFileHandler(
                self.log_path,
                maxBytes=self.max_bytes,
                backupCount=self.backup_count
            )
            file_handler.setLevel(self.log_level)
            file_handler.setFormatter(logging.Formatter(self.log_format))
            logger.addHandler(file_handler)

        # Console handler for immediate feedback
        console_handler = logging.StreamHandler()
        console_handler.setLevel(self.log_level)
        console_handler.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))
        logger.addHandler(console_handler)

        return logger

    def get_logger(self) -> logging.Logger:
        return self.logger

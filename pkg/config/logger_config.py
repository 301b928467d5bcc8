import logging
import os
import sys
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from constants import ENV_LOG_DIR, ENV_LOG_LEVEL


class RunLogger:
    """
    Centralized logging configuration for training and evaluation runs.

    Features:
    - Console logging on stderr (stdout carries JSON results)
    - Optional file logging: per-session log, rotating main log, error-only log
    - Separate log levels for console and file
    """

    def __init__(
        self,
        name: str = "contrastnet",
        log_dir: Optional[str] = None,
        console_level: int = logging.INFO,
        file_level: int = logging.DEBUG,
        max_bytes: int = 10 * 1024 * 1024,  # 10 MB
        backup_count: int = 5
    ):
        self.name = name
        self.log_dir = Path(log_dir) if log_dir else None
        self.console_level = console_level
        self.file_level = file_level
        self.max_bytes = max_bytes
        self.backup_count = backup_count

        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False

        self.logger.handlers.clear()

        self._setup_console_handler()
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            self._setup_file_handlers()

    def _setup_console_handler(self):
        """Setup console output on stderr"""
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(self.console_level)
        console_handler.setFormatter(logging.Formatter(
            fmt='%(asctime)s [%(levelname)-8s] %(message)s',
            datefmt='%H:%M:%S'
        ))
        self.logger.addHandler(console_handler)

    def _setup_file_handlers(self):
        """Setup session and rotating file handlers"""
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        file_format = logging.Formatter(
            fmt='%(asctime)s [%(levelname)-8s] [%(name)s:%(funcName)s:%(lineno)d] %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        session_log = self.log_dir / f"run_session_{timestamp}.log"
        session_handler = logging.FileHandler(session_log, mode='w', encoding='utf-8')
        session_handler.setLevel(self.file_level)
        session_handler.setFormatter(file_format)
        self.logger.addHandler(session_handler)

        rotating_handler = RotatingFileHandler(
            self.log_dir / "main.log",
            maxBytes=self.max_bytes,
            backupCount=self.backup_count,
            encoding='utf-8'
        )
        rotating_handler.setLevel(self.file_level)
        rotating_handler.setFormatter(file_format)
        self.logger.addHandler(rotating_handler)

        error_handler = RotatingFileHandler(
            self.log_dir / "errors.log",
            maxBytes=self.max_bytes,
            backupCount=self.backup_count,
            encoding='utf-8'
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(file_format)
        self.logger.addHandler(error_handler)

    def get_logger(self) -> logging.Logger:
        """Get configured logger instance"""
        return self.logger

    def close(self):
        """Close and detach every handler"""
        for handler in self.logger.handlers[:]:
            handler.close()
            self.logger.removeHandler(handler)


# Global logger instance
_run_logger: Optional[RunLogger] = None


def _level_from_env(default: int) -> int:
    name = os.getenv(ENV_LOG_LEVEL)
    if not name:
        return default
    level = logging.getLevelName(name.upper())
    return level if isinstance(level, int) else default


def configure_run_logger(
    name: str = "contrastnet",
    log_dir: Optional[str] = None,
    console_level: Optional[int] = None,
    file_level: int = logging.DEBUG
) -> logging.Logger:
    """
    (Re)configure the singleton run logger.

    Args:
        name: Logger name
        log_dir: Directory for file logs; falls back to CONTRASTNET_LOG_DIR, none disables files
        console_level: Console level; falls back to CONTRASTNET_LOG_LEVEL, then INFO
        file_level: Logging level for file output

    Returns:
        Configured logger instance
    """
    global _run_logger

    if _run_logger is not None:
        _run_logger.close()
    _run_logger = RunLogger(
        name=name,
        log_dir=log_dir or os.getenv(ENV_LOG_DIR),
        console_level=console_level if console_level is not None else _level_from_env(logging.INFO),
        file_level=file_level
    )
    return _run_logger.get_logger()


def get_run_logger() -> logging.Logger:
    """Get or create the singleton run logger"""
    if _run_logger is None:
        return configure_run_logger()
    return _run_logger.get_logger()


def log_run_start(run_name: str, params: dict = None):
    """Log run start with parameters"""
    logger = get_run_logger()
    logger.info("=" * 80)
    logger.info(f"RUN START: {run_name}")
    if params:
        logger.info(f"Parameters: {params}")
    logger.info("=" * 80)


def log_run_end(run_name: str, status: str, duration: float = None):
    """Log run end with status"""
    logger = get_run_logger()
    status_mark = "✓" if status.upper() == "PASSED" else "✗"

    logger.info("-" * 80)
    msg = f"RUN END: {run_name} - {status_mark} {status.upper()}"
    if duration:
        msg += f" ({duration:.2f}s)"
    logger.info(msg)
    logger.info("-" * 80)


def log_episode(record: dict, every: int = 100):
    """Log a training episode record; INFO every `every` episodes, DEBUG otherwise"""
    logger = get_run_logger()
    msg = (
        f"Episode #{record['episode']}: total={record['total']:.6f} "
        f"con={record['l_con']:.6f} inst={record['l_inst']:.6f} "
        f"task={record['l_task']:.6f} alpha={record['alpha']:.4f}"
    )
    if every and record["episode"] % every == 0:
        logger.info(msg)
    else:
        logger.debug(msg)


def log_validation(episode: int, accuracy: float, best: bool):
    """Log a validation event"""
    logger = get_run_logger()
    marker = " (new best)" if best else ""
    logger.info(f"Validation after episode #{episode}: accuracy={accuracy:.4f}{marker}")


def log_error(error: Exception, context: str = None):
    """Log error with context"""
    logger = get_run_logger()

    if context:
        logger.error(f"Error in {context}: {type(error).__name__}: {str(error)}")
    else:
        logger.error(f"{type(error).__name__}: {str(error)}")

    logger.debug("Traceback:", exc_info=True)


def log_metric(metric_name: str, value, unit: str = None):
    """Log a run metric"""
    logger = get_run_logger()
    unit_str = f" {unit}" if unit else ""
    logger.info(f"METRIC: {metric_name} = {value}{unit_str}")

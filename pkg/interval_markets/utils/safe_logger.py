"""
Safe logging utility for the market engines
Keeps large payloads (node lists, price vectors) short in production
"""

import logging
from typing import Any, Optional

from interval_markets.config import settings

# Sequences longer than this are truncated in production logs
MAX_ITEMS = 8


class SafeLogger:
    def __init__(self):
        self.is_production = settings.is_production
        self.debug_enabled = settings.debug
        self.log_level = settings.log_level

        # Configure logging
        logging.basicConfig(
            level=getattr(logging, self.log_level.upper(), logging.INFO),
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )
        self.logger = logging.getLogger("interval_markets")

    def _summarize_data(self, data: Any) -> Any:
        """Shorten long sequences so one log line stays one line"""
        if isinstance(data, (list, tuple)):
            items = [self._summarize_data(item) for item in data[:MAX_ITEMS]]
            if len(data) > MAX_ITEMS:
                items.append(f"... ({len(data)} items)")
            return items

        if isinstance(data, dict):
            return {key: self._summarize_data(value) for key, value in data.items()}

        return data

    def _format(self, message: str, data: Optional[Any]) -> str:
        if data is None:
            return message
        payload = self._summarize_data(data) if self.is_production else data
        return f"{message}: {payload}"

    def info(self, message: str, data: Optional[Any] = None):
        """Log info message"""
        self.logger.info(self._format(message, data))

    def debug(self, message: str, data: Optional[Any] = None):
        """Log debug message (only in debug mode)"""
        if not self.debug_enabled:
            return
        self.logger.debug(self._format(message, data))

    def warning(self, message: str, data: Optional[Any] = None):
        """Log warning message"""
        self.logger.warning(self._format(message, data))

    def error(self, message: str, data: Optional[Any] = None):
        """Log error message"""
        self.logger.error(self._format(message, data))

    def print(self, message: str, data: Optional[Any] = None):
        """Print message for the CLI user; logged instead in production"""
        if self.is_production:
            self.info(message, data)
        elif data is not None:
            print(f"{message}: {data}")
        else:
            print(message)


# Global safe logger instance
market_logger = SafeLogger()

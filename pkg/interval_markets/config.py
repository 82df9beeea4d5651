"""
Runtime settings for the interval market engines
Values come from environment variables, with defaults suitable for development
"""

import os


class MarketSettings:
    def __init__(self):
        self.environment = os.getenv("ENVIRONMENT", "development")
        self.debug = os.getenv("DEBUG", "false").lower() == "true"
        self.log_level = os.getenv("LOG_LEVEL", "INFO")

        # LMSR tree: buys between full bottom-up re-derivations of log_partial
        self.recompute_interval = int(os.getenv("MARKET_RECOMPUTE_INTERVAL", str(2 ** 20)))

        # LCMM: looser than test tolerance so accumulated drift does not trip it
        self.coherence_tolerance = float(os.getenv("MARKET_COHERENCE_TOLERANCE", "1e-6"))
        self.degenerate_epsilon = float(os.getenv("MARKET_DEGENERATE_EPSILON", "1e-300"))

        self.dense_max_k = int(os.getenv("MARKET_DENSE_MAX_K", "16"))
        self.sim_workers = int(os.getenv("MARKET_SIM_WORKERS", "1"))

    @property
    def is_production(self) -> bool:
        return self.environment == "production"


# Global settings instance
settings = MarketSettings()

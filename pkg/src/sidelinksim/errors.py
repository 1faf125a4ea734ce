class ConfigError(ValueError):
    """Invalid or inconsistent configuration value."""


class SimulationError(RuntimeError):
    """Internal invariant violated during a run (engine bug)."""

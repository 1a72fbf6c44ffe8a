class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (schedules, mixtures, method params)."""


class ScheduleError(ConfigurationError):
    """A noise/time schedule is numerically inconsistent."""

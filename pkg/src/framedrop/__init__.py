"""Energy-aware frame dropping for tracking-by-detection perception pipelines."""

__version__ = "0.1.0"

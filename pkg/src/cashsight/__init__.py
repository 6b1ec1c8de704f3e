"""Real-time multi-currency detection runtime with voice-feedback assist."""

__version__ = "0.1.0"

"""History attention for conversational question answering, from scratch on numpy."""

__version__ = "0.1.0"

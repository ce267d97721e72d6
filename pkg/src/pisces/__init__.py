"""Private and compliable cryptocurrency exchange: library, platform, client."""

__version__ = "0.1.0"

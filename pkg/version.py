"""Version information for ReadingTrace."""

VERSION = "0.1.0"

# Command-line entry points for ReadingTrace.

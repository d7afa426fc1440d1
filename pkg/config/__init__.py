# Configuration module for ReadingTrace

# Core domain modules for ReadingTrace

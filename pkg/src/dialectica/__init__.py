"""Multi-agent debate with memory, reflection and persona evolution, plus a
judged tournament and ranking analytics."""

__version__ = "0.1.0"

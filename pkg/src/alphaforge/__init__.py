"""Grammar-guided alpha factor mining with tree search and a learned
policy/value network."""

__version__ = "0.1.0"

"""Decision-theoretic value of information for human/AI decision workflows."""

__version__ = "0.1.0"

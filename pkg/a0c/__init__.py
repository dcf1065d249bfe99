"""Tree search with learned continuous-action policies (A0C)"""

__version__ = "1.0.0"

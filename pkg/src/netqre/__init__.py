"""Quantitative regular expressions over packet traces, plus a
syntax-guided synthesizer that learns traffic classifiers from labeled
examples."""

__version__ = "0.1.0"

"""
Causal effect identification from a causal DAG augmented with
context-specific independence labels over control variables.
"""
__version__ = "0.1.0"

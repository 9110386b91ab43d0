"""Hierarchical offline-online RL agent on a procedural key-door-apple gridworld."""

__version__ = "0.1.0"

"""Discrete-event fog load balancing with independent and centralized DDQL agents."""

__version__ = "0.1.0"

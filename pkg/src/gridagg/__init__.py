"""Reliability and delay analysis of data aggregation in grid-deployed IoT networks."""

__version__ = "0.1.0"

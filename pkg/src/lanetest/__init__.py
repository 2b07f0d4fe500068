"""Scenario-based offline vs. online testing harness for lane-keeping controllers."""

__version__ = "0.1.0"

"""Evaluation: judge-based metrics, benchmark running, statistics."""

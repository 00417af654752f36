"""Scans, experiments, acceptance checks and the command-line interface."""

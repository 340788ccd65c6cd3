"""Experiment registry, runner, rate fits and command-line interface."""

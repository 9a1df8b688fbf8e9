"""Experiment configuration, ensemble runs, verdicts and the command line."""

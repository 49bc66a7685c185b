"""Experiment harness: config, synthetic corpora, persistence, CLI."""

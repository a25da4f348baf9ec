"""Experiment pipelines shared by the CLI, demos and acceptance tests."""

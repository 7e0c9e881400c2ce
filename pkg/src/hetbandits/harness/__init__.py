"""Experiment orchestration: round-loop engines, configs, seeded trials, output files."""

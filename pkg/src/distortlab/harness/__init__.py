"""Scenario configs, seeded runs, reports and the command line."""

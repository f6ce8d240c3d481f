"""Desk-scale experiment harness: clutterbox, distance study, benchmarks."""

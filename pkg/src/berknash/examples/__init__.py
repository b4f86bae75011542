"""Worked example models with closed-form or brute-force oracles."""

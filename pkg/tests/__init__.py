"""Tests package for StratBoot.

Unit and integration tests run by default; the scaled calibration studies
in test_acceptance.py are marked slow.
"""

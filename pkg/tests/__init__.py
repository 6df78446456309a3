"""Tests package for the EGAD distillation lab."""

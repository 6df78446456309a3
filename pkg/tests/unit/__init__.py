"""Tests package for unit tests."""

"""Tests package for integration tests."""

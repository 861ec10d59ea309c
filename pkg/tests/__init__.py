"""Test suite for mogeo."""

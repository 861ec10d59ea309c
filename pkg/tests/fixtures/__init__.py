"""Test fixtures and synthetic scenes."""

"""Tests for the zeno simulation library."""

"""Tests for sr-granger."""

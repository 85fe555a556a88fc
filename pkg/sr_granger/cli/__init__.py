"""CLI package for sr-granger."""

"""Analyzers package for least-squares fitting of PLE data."""

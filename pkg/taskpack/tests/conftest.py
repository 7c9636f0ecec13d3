"""Keeps this directory importable for the shared fixture helpers."""

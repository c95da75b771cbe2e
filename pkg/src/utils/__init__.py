"""Date, JSON and manifest helpers."""

"""CLI interface modules."""

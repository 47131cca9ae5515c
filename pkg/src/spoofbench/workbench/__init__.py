"""CLI entry points, matrix expansion, and aggregation tables."""

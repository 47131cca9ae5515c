"""Data pipeline: metadata tables -> transform -> augment -> batches."""

"""Detection model components: front-ends, aggregation, back-ends, losses."""

"""Analysis services: ingest, ego networks, clustering, layers, review types, synthesis."""

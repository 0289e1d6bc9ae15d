"""Per-release corpus construction: preprocessing, chunking, persistence."""

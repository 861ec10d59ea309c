"""Training, checkpointing, reporting and the command-line surface."""

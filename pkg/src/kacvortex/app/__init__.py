"""Configuration, orchestration, file formats and the command line."""

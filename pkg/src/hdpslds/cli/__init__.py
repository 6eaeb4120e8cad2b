"""Command-line interface: configuration, file formats and preprocessing."""

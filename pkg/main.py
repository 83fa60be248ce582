"""Main entry point for the tempograph command line."""

from src.cli import cli

if __name__ == "__main__":
    cli(prog_name="tempograph")

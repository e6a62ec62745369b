"""
Main entry point for boxtraj.

This file is executed when running: python -m boxtraj.main (or the
`boxtraj` console script).
"""
import os
import sys

from boxtraj.cli import cli_dispatch


def main():
    """Run one CLI command and exit with its status code."""

    # Check if we're in debug mode
    if os.getenv("DEBUG_BOXTRAJ"):
        print("boxtraj starting in DEBUG mode", file=sys.stderr)
        print("Waiting for debugger to attach on port 5678...", file=sys.stderr)
        # Enable debugpy if in debug mode
        try:
            import debugpy  # type: ignore
            debugpy.listen(("127.0.0.1", 5678))
            debugpy.wait_for_client()
            print("Debugger attached! Continuing...", file=sys.stderr)
        except ImportError:
            print("debugpy not available - install with: poetry install --with dev", file=sys.stderr)

    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""CLI entry point for pmemprims

Allows running as: python -m pmemprims
"""

from pmemprims.cli import main

if __name__ == '__main__':
    main()

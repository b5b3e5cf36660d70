"""Allow running the CLI as `python -m topolayer`."""
from .cli import main

main()

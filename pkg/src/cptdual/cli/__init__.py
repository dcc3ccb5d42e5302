from .cli import cli, main

__ALL__ = [
    cli,
    main,
]

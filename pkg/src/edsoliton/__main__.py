import sys

from .cli_io.main import main

sys.exit(main())

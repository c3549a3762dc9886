import sys

from relqkd.cli import main

sys.exit(main())

import sys

from jkoflow.cli import main

sys.exit(main())

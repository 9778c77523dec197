import sys

from dialogact.cli import main

sys.exit(main())

import sys

from gfanc.cli import main

sys.exit(main())

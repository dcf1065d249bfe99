import sys

from a0c.main import main

sys.exit(main())

import sys

from scedlab.main import main

sys.exit(main())

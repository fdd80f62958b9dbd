"""``python -m iscap``."""

import sys

from iscap.main import main

sys.exit(main())

#!/usr/bin/env python3

import sys
from dotenv import load_dotenv

load_dotenv()

from pmad.main import main  # noqa: E402  settings read the environment at import

if __name__ == "__main__":
    sys.exit(main())

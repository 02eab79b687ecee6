#!/usr/bin/env python3
"""
ASD Startup Script
Runs the ``asd`` command line from a source checkout
"""

import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

if __name__ == "__main__":
    # Load environment variables (ASD_LOG_LEVEL, ASD_LOG_DIR, ASD_JSON_LOGS)
    try:
        from dotenv import load_dotenv
        load_dotenv()
    except ImportError:
        pass

    from src.cli import main

    sys.exit(main())

import os
import sys

# Allow running the suite from a source checkout without installation.
_SRC = os.path.join(os.path.dirname(__file__), "src")
if os.path.isdir(_SRC) and _SRC not in sys.path:
    sys.path.insert(0, _SRC)

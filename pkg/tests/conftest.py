import sys
from pathlib import Path

# make sibling helper modules (oracles, chains) importable from any test
sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

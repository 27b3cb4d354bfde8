import sys
from pathlib import Path

# Make the shared test helpers (oracles, datagen, fuzzing) importable.
sys.path.insert(0, str(Path(__file__).parent))

#!/usr/bin/env python3
"""
Test Imports - import smoke check without running a simulation

Handy on a fresh machine before the first `./run.sh`.
"""

import sys
from pathlib import Path

# Project root on sys.path
PROJECT_ROOT = Path(__file__).parent
sys.path.insert(0, str(PROJECT_ROOT))

MODULES = [
    "src.core.gaussian_source",
    "src.core.security",
    "src.core.run_config",
    "src.core.artifacts",
    "src.core.reporting",
    "src.processors.cascade",
    "src.processors.distillation",
    "src.processors.privacy_amplification",
    "src.protocol.wire",
    "src.protocol.transport",
    "src.protocol.session",
    "src.main",
]


def test_imports():
    """Import every module of the package."""

    print("🧪 Testing imports...")

    try:
        from config.settings import Settings
        print("✅ config.settings imported successfully")
        print(f"   PROJECT_ROOT: {Settings.PROJECT_ROOT}")
    except Exception as e:
        print(f"❌ config.settings failed: {e}")
        return False

    import importlib
    for name in MODULES:
        try:
            importlib.import_module(name)
            print(f"✅ {name} imported successfully")
        except Exception as e:
            print(f"❌ {name} failed: {e}")
            return False

    print("\n✅ All imports passed!")
    return True


if __name__ == "__main__":
    success = test_imports()
    sys.exit(0 if success else 1)

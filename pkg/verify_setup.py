#!/usr/bin/env python3
"""
Setup verification script for the name-based race inference toolkit.
Run this script to verify all dependencies are installed correctly.
"""

import os
import sys

REQUIRED_PACKAGES = {
    'pandas': 'pandas',
    'numpy': 'numpy',
    'openpyxl': 'openpyxl',
    'PyYAML': 'yaml',
    'Unidecode': 'unidecode',
    'pytest': 'pytest',
}

PROJECT_FILES = [
    'categories.py',
    'reference_ingest.py',
    'simplex_core.py',
    'inference_engine.py',
    'bias_audit.py',
    'flag_generator.py',
    'excel_exporter.py',
    'config.py',
    'cli.py',
    'requirements.txt',
    'config.example.yaml',
    'README.md',
    'QUICKSTART.md',
    os.path.join('sample_data', 'census_surnames.csv'),
    os.path.join('sample_data', 'mortgage_given_names.csv'),
    os.path.join('sample_data', 'authors.csv'),
]

MODULES = ['categories', 'reference_ingest', 'simplex_core', 'inference_engine',
           'bias_audit', 'flag_generator', 'excel_exporter', 'config', 'cli']


def check_python_version():
    """Check if Python version is 3.9 or higher."""
    print("Checking Python version...")
    version = sys.version_info
    if version.major >= 3 and version.minor >= 9:
        print(f"✅ Python {version.major}.{version.minor}.{version.micro} - OK")
        return True
    print(f"❌ Python {version.major}.{version.minor}.{version.micro} - Need 3.9 or higher")
    return False


def check_dependencies():
    print("\nChecking dependencies...")
    missing = []
    for package, module in REQUIRED_PACKAGES.items():
        try:
            __import__(module)
            print(f"✅ {package}")
        except ImportError:
            print(f"❌ {package}")
            missing.append(package)

    if missing:
        print("\n⚠️  Some dependencies are missing!")
        print("Run: pip install -r requirements.txt")
        return False
    print("\n✅ All dependencies installed!")
    return True


def check_project_files():
    print("\nChecking project files...")
    missing = [path for path in PROJECT_FILES if not os.path.exists(path)]
    for path in PROJECT_FILES:
        print(f"{'❌' if path in missing else '✅'} {path}")

    if missing:
        print("\n⚠️  Some project files are missing!")
        return False
    print("\n✅ All project files present!")
    return True


def test_imports():
    """Test if the project modules can be imported."""
    print("\nTesting module imports...")
    for module in MODULES:
        try:
            __import__(module)
            print(f"✅ {module}")
        except Exception as e:
            print(f"❌ {module}: {e}")
            return False

    print("\n✅ All modules import successfully!")
    return True


def main():
    print("=" * 60)
    print("Name-Based Race Inference Toolkit")
    print("Setup Verification Script")
    print("=" * 60)

    checks = [
        check_python_version(),
        check_project_files(),
        check_dependencies(),
    ]

    if all(checks):
        print("\n" + "=" * 60)
        print("🎉 Setup verification complete - all checks passed!")
        print("=" * 60)
        print("\nNext steps:")
        print("  1. Run: python3 cli.py infer --config config.example.yaml")
        print("  2. Run: python3 cli.py sweep --config config.example.yaml --excel")
        print("  3. Run the tests: pytest")
        print("\nFor help, read QUICKSTART.md")
        print("=" * 60)
        return 0 if test_imports() else 1

    print("\n" + "=" * 60)
    print("❌ Setup verification failed!")
    print("=" * 60)
    print("\nPlease fix the issues above and run again.")
    print("\nFor installation help, read README.md")
    print("=" * 60)
    return 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""
Script de démarrage de l'API.
"""
import os
import subprocess
import sys


def main():
    """Démarrer l'application"""
    backend_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "backend")
    port = os.getenv("PORT", "8000")
    cmd = [sys.executable, "-m", "uvicorn", "app.main:app", "--host", "0.0.0.0", "--port", port]
    print(f"Starting: {' '.join(cmd)} (cwd={backend_dir})")
    return subprocess.run(cmd, cwd=backend_dir).returncode


if __name__ == "__main__":
    sys.exit(main())

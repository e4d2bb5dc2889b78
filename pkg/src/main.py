#!/usr/bin/env python3
"""
gpinn - gradient-enhanced PINN 실험 도구

Entry point for the application.

Usage:
    python main.py presets
    python main.py run --config 3.2.1 --out out
    python main.py sweep --config presets/3.2.2.json --jobs 8
    python main.py rar --config 3.4.1
    python main.py report --out out/3.2.1
"""

from gpinn.cli import main

if __name__ == "__main__":
    main()

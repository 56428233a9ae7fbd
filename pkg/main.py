# -*- coding: utf-8 -*-
"""
SheafDynamics - Cellular Sheaf Opinion Dynamics
===============================================

Sheaf cohomology and diffusion experiments driven by JSON scenario files.
Features:
- Global, local and relative sections (H0) of cellular sheaves
- Linear, stubborn and reluctant sheaf diffusion
- Stabilizability / detectability tests
- Learning restriction maps ("learning to lie") and joint dynamics
- Bounded-confidence and antagonistic (signed) nonlinear Laplacians

Usage:
    python main.py run scenarios/four_agents.json --out out/

Author: SheafDynamics
Version: 1.0.0
"""

import sys
import os

# Add src to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.app import main

if __name__ == "__main__":
    sys.exit(main())

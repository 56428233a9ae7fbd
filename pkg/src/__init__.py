# SheafDynamics - Cellular sheaf Laplacians and opinion dynamics
# Coboundaries, sheaf cohomology, and the diffusion family built on them:
# heat flow, stubborn agents, control tests, learning to lie, bounded confidence

__version__ = "1.0.0"
__author__ = "SheafDynamics"

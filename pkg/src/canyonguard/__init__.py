"""Parallel-autonomy flight-control workbench.

Trains guardian and pilot policies in a raycast canyon, extracts visual
attention from both, and arbitrates control through attention-difference
intervention rules feeding a quadratic-program cooperation layer. A websocket
gateway lets a human fly with the guardian from the browser cockpit.
"""

__version__ = "0.1.0"

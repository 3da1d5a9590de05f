"""
pidsqueeze: PID feedback squeezing of a mechanical quadrature.

Quantum Kalman filtering of a back-action evading measurement, with
proportional, integral and derivative feedback on the filtered estimate.
"""

__version__ = "0.1.0"

"""
Filter dynamics.

Covariance (Riccati) equations, ensemble-averaged moment equations and
stochastic Euler-Maruyama trajectories of the filtered estimates.
"""

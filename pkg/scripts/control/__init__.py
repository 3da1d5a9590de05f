"""Closed-loop transfer-function analysis and PID synthesis."""

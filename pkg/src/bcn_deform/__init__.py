"""Poisson-Lie deformed trigonometric BC_n Sutherland system."""

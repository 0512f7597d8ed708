"""Semi-discrete 1-d wave equation with potential: discrete calculus, leapfrog solver, Carleman weights and potential recovery."""

__version__ = "0.1.0"

"""Indoor navigation over a priori floor map: map compilation, route planning,
a 2D corridor simulator, simulated perception and a closed-loop agent."""

__version__ = "0.1.0"

"""Exclusion process with a slow site: simulator and verification harness."""

from .model import (Configuration, Lattice, RateSchedule, jump_rate, swap,
                    LINE, TORUS, SLOW_BONDS, SLOW_SITE, UNIFORM)
from .dynamics import (EventStream, SimClock, Trajectory, coupled_evolve,
                       gillespie_step, graphical_step, simulate,
                       FLUCTUATION, GILLESPIE, GRAPHICAL, HYDRODYNAMIC)

__all__ = [
    "Configuration", "Lattice", "RateSchedule", "jump_rate", "swap",
    "LINE", "TORUS", "SLOW_BONDS", "SLOW_SITE", "UNIFORM",
    "EventStream", "SimClock", "Trajectory", "coupled_evolve",
    "gillespie_step", "graphical_step", "simulate",
    "FLUCTUATION", "GILLESPIE", "GRAPHICAL", "HYDRODYNAMIC",
]

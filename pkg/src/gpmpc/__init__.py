"""GP disturbance learning with receding-horizon tracking for rolling microrobots."""
from . import dynamics, gp, mpc, planner, sim, sysid

__all__ = ["dynamics", "gp", "mpc", "planner", "sim", "sysid"]
__version__ = "0.1.0"

"""Guard-suspended flapping-wing vehicle: dynamics, unsteady aerodynamics,
extended-state observer and hover control."""

__version__ = "0.1.0"

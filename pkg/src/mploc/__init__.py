"""Multi-particle localization lab: finite-volume Hamiltonians with power-law
hopping, Green's function norms, multiscale parameter schedules and seeded
Monte Carlo checks of the probabilistic estimates."""

__version__ = "0.1.0"

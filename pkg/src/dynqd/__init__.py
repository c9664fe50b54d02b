"""Dynamic quality-diversity search: MAP-Elites and CMA-ME variants that keep
their archive up to date while the environment shifts underneath them."""

__version__ = "0.1.0"

"""Beta-ensembles with generalized pair repulsion."""
__version__ = "0.1.0"

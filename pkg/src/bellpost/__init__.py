"""Bell tests under coincidence postselection: sharpened inequalities, threshold
detection efficiencies, detector simulation and causal-diagram checks."""

__version__ = "0.1.0"

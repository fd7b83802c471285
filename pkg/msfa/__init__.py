"""Joint MSFA / Wiener demosaicking design, simulation and evaluation."""

"""Hybrid holographic and digital beamforming with stacked metasurfaces.

Near-field wideband multi-user downlink: metasurface phase design at the
carrier, MMSE precoding under phase-error statistics, iterative
waterfilling and rate evaluation.
"""

__version__ = "0.1.0"

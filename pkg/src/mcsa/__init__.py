"""Motor current signature analysis toolkit.

Synthesizes faulted induction-motor line currents, predicts and measures
fault sideband frequencies, classifies faults with a small feed-forward
network and emulates an 8-bit ADC read over a parallel-port nibble bus.
"""

__version__ = "0.1.0"

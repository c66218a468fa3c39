"""Key rates of heterodyne CV-QKD with virtual noiseless amplification or attenuation."""

__version__ = "0.1.0"

"""Option pricing by unsupervised training of tanh networks on PDE/LCP residual losses."""

__version__ = "0.1.0"

"""Reference prices: closed forms, a binomial tree and a finite-difference LCP solver."""

from pinnprice.reference.closed_form import bivar_norm_cdf, bs_european, margrabe, max_call, norm_cdf
from pinnprice.reference.lattice import binomial_american
from pinnprice.reference.fd import GridSurface, PSORConfig, PSORError, fd_american

__all__ = ["bivar_norm_cdf", "bs_european", "margrabe", "max_call", "norm_cdf",
           "binomial_american", "GridSurface", "PSORConfig", "PSORError", "fd_american"]

"""Closed-form prices and the normal-distribution machinery behind them.

All pricing functions are vectorized over ``t`` and the spot arrays and accept
the boundary limits of the domain (zero spots, ``t = T``).
"""

import numpy as np
from scipy.special import ndtr

# Gauss-Legendre rule on [-1, 1]; the bivariate algorithm uses the negative half.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_HALF_X, _HALF_W = _GL_X[:10], _GL_W[:10]
_TWOPI = 2.0 * np.pi
_CLIP = 38.0  # ndtr(-38) underflows to ~1e-316


def norm_cdf(x):
    """Standard normal CDF (erfc-based, full double accuracy in both tails)."""
    return ndtr(x)


def _bvn_upper(h, k, r):
    """P(X > h, Y > k) for standard normals with correlation ``r``.

    Drezner-Wesolowsky quadrature in Genz's refinement: a 20-point Gauss-Legendre
    rule in the arcsine variable for |r| < 0.925, and an asymptotic expansion plus
    correction integral near |r| = 1.
    """
    h, k, r = np.broadcast_arrays(np.asarray(h, float), np.asarray(k, float), np.asarray(r, float))
    h, k, r = h.ravel().copy(), k.ravel().copy(), r.ravel()
    out = np.empty_like(h)

    mid = np.abs(r) < 0.925
    if mid.any():
        hh, kk, rr = h[mid], k[mid], r[mid]
        hk = hh * kk
        hs = 0.5 * (hh * hh + kk * kk)
        asr = np.arcsin(rr)[:, None]
        acc = np.zeros_like(hh)
        for sign in (1.0, -1.0):
            sn = np.sin(asr * (sign * _HALF_X + 1.0) / 2.0)
            acc += (_HALF_W * np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn))).sum(axis=1)
        out[mid] = acc * asr[:, 0] / (2.0 * _TWOPI) + ndtr(-hh) * ndtr(-kk)

    high = ~mid
    if high.any():
        hh, kk, rr = h[high], k[high].copy(), r[high]
        neg = rr < 0
        kk[neg] = -kk[neg]
        hk = hh * kk
        bvn = np.zeros_like(hh)
        inner = np.abs(rr) < 1.0
        if inner.any():
            hi, ki, hki, ri = hh[inner], kk[inner], hk[inner], rr[inner]
            as_ = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(as_)
            bs = (hi - ki) ** 2
            c = (4.0 - hki) / 8.0
            d = (12.0 - hki) / 16.0
            val = a * np.exp(-(bs / as_ + hki) / 2.0) * (
                1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0)
            b = np.sqrt(bs)
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                corr = np.exp(-hki / 2.0) * np.sqrt(_TWOPI) * ndtr(-b / a) * b * (
                    1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
            val = val - np.where(hki > -160.0, corr, 0.0)
            a = a / 2.0
            aa, bb, hkk, cc, dd = a[:, None], bs[:, None], hki[:, None], c[:, None], d[:, None]
            with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
                xs = (aa * (_HALF_X + 1.0)) ** 2
                rs = np.sqrt(1.0 - xs)
                t1 = aa * _HALF_W * (np.exp(-bb / (2.0 * xs) - hkk / (1.0 + rs)) / rs
                                     - np.exp(-(bb / xs + hkk) / 2.0) * (1.0 + cc * xs * (1.0 + dd * xs)))
                xs = (as_[:, None]) * (1.0 - _HALF_X) ** 2 / 4.0
                rs = np.sqrt(1.0 - xs)
                t2 = aa * _HALF_W * np.exp(-(bb / xs + hkk) / 2.0) * (
                    np.exp(-hkk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + cc * xs * (1.0 + dd * xs)))
            val = val + np.nan_to_num(t1).sum(axis=1) + np.nan_to_num(t2).sum(axis=1)
            bvn[inner] = -val / _TWOPI
        pos = ~neg
        bvn[pos] = bvn[pos] + ndtr(-np.maximum(hh[pos], kk[pos]))
        bvn[neg] = -bvn[neg] + np.maximum(0.0, ndtr(-hh[neg]) - ndtr(-kk[neg]))
        out[high] = bvn
    return np.clip(out, 0.0, 1.0)


def bivar_norm_cdf(a, b, rho):
    """M(a, b; rho) = P(X <= a, Y <= b) for standard normals with correlation rho."""
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho_arr) > 1.0):
        raise ValueError("correlation must lie in [-1, 1]")
    a_arr = np.clip(np.asarray(a, dtype=float), -_CLIP, _CLIP)
    b_arr = np.clip(np.asarray(b, dtype=float), -_CLIP, _CLIP)
    shape = np.broadcast_shapes(a_arr.shape, b_arr.shape, rho_arr.shape)
    res = _bvn_upper(-a_arr, -b_arr, rho_arr).reshape(shape)
    return res[()] if res.ndim == 0 else res


def _tau(t, T):
    return np.maximum(T - np.asarray(t, dtype=float), 0.0)


def _check_market(market, dim):
    if len(market.sigma) != dim:
        raise ValueError(f"expected {dim} volatilities, got {len(market.sigma)}")
    if market.T <= 0 or min(market.sigma) < 0:
        raise ValueError("invalid market parameters")


def bs_european(t, S, market, kind="put"):
    """Black-Scholes price with continuous dividend yield."""
    _check_market(market, 1)
    if kind not in ("put", "call"):
        raise ValueError(f"kind must be put or call, got {kind!r}")
    K, r, sig, q = market.K, market.r, market.sigma[0], market.delta[0]
    tau = _tau(t, market.T)
    S = np.asarray(S, dtype=float)
    tau, S = np.broadcast_arrays(tau, S)
    live = (tau > 0) & (S > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vol = sig * np.sqrt(tau)
        d1 = (np.log(S / K) + (r - q + 0.5 * sig * sig) * tau) / vol
        d2 = d1 - vol
    disc_s = S * np.exp(-q * tau)
    disc_k = K * np.exp(-r * tau)
    if kind == "call":
        price = disc_s * ndtr(d1) - disc_k * ndtr(d2)
        limit = np.where(tau > 0, 0.0, np.maximum(S - K, 0.0))
    else:
        price = disc_k * ndtr(-d2) - disc_s * ndtr(-d1)
        limit = np.where(tau > 0, disc_k, np.maximum(K - S, 0.0))
    out = np.where(live, price, limit)
    return out[()] if out.ndim == 0 else out


def _pair_vol(market):
    s1, s2 = market.sigma
    var = s1 * s1 + s2 * s2 - 2.0 * s1 * s2 * market.rho
    return np.sqrt(max(var, 0.0))


def margrabe(t, S1, S2, market):
    """Value of the option to exchange asset 2 for asset 1, payoff (S1 - S2)+."""
    _check_market(market, 2)
    q1, q2 = market.delta
    sig = _pair_vol(market)
    tau = _tau(t, market.T)
    tau, S1, S2 = np.broadcast_arrays(tau, np.asarray(S1, float), np.asarray(S2, float))
    if np.any(S1 < 0) or np.any(S2 < 0):
        raise ValueError("spot prices must be non-negative")
    a1 = S1 * np.exp(-q1 * tau)
    a2 = S2 * np.exp(-q2 * tau)
    # zero total variance (or expiry): forwards are deterministic
    intrinsic = np.maximum(a1 - a2, 0.0)
    vol = sig * np.sqrt(tau)
    live = (vol > 1e-14) & (S1 > 0) & (S2 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(S1 / S2) + (q2 - q1 + 0.5 * sig * sig) * tau) / vol
        d2 = d1 - vol
        price = a1 * ndtr(d1) - a2 * ndtr(d2)
    out = np.where(live, price, intrinsic)
    return out[()] if out.ndim == 0 else out


def max_call(t, S1, S2, market, K=None):
    """Call on the maximum of two assets, payoff (max(S1, S2) - K)+."""
    _check_market(market, 2)
    K = market.K if K is None else K
    if K is None or K < 0:
        raise ValueError("max_call needs a non-negative strike")
    r, rho = market.r, market.rho
    s1, s2 = market.sigma
    q1, q2 = market.delta
    sig = _pair_vol(market)
    if sig < 1e-12:
        raise ValueError("max_call undefined for zero spread volatility (sigma1 = sigma2, rho = 1)")
    rho1 = float(np.clip((s1 - rho * s2) / sig, -1.0, 1.0))
    rho2 = float(np.clip((s2 - rho * s1) / sig, -1.0, 1.0))
    tau = _tau(t, market.T)
    tau, S1, S2 = np.broadcast_arrays(tau, np.asarray(S1, float), np.asarray(S2, float))
    if np.any(S1 < 0) or np.any(S2 < 0):
        raise ValueError("spot prices must be non-negative")
    payoff = np.maximum(np.maximum(S1, S2) - K, 0.0)
    live = tau > 0
    st = np.sqrt(np.where(live, tau, 1.0))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d = (np.log(S1 / S2) + (q2 - q1 + 0.5 * sig * sig) * tau) / (sig * st)
        d1 = (np.log(S1 / K) + (r - q1 + 0.5 * s1 * s1) * tau) / (s1 * st)
        d2 = (np.log(S2 / K) + (r - q2 + 0.5 * s2 * s2) * tau) / (s2 * st)
    # log(0) limits give +-inf, which the clipped bivariate CDF handles
    d = np.nan_to_num(d, nan=0.0)
    d1 = np.nan_to_num(d1, nan=-np.inf)
    d2 = np.nan_to_num(d2, nan=-np.inf)
    term1 = S1 * np.exp(-q1 * tau) * bivar_norm_cdf(d1, d, rho1)
    term2 = S2 * np.exp(-q2 * tau) * bivar_norm_cdf(d2, -d + sig * st, rho2)
    term3 = K * np.exp(-r * tau) * (1.0 - bivar_norm_cdf(-d1 + s1 * st, -d2 + s2 * st, rho))
    out = np.where(live, term1 + term2 - term3, payoff)
    return out[()] if out.ndim == 0 else out

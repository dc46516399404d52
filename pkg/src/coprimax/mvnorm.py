"""Multivariate-normal rectangle probabilities and equicoordinate quantiles.

The orthant probability P(Z_1 <= c, ..., Z_S <= c) for Z ~ N_S(0, R) is
computed by separation of variables on a reordered Cholesky factor,
integrated with a randomized Richtmyer (Kronecker) lattice rule. Random
shifts of the lattice give an error estimate; the point count doubles until
the estimate is below tolerance. With a fixed seed the result is exactly
reproducible.

Estimated correlation matrices can be numerically indefinite, so inputs go
through a clipping repair that zeroes negative eigenvalues and restores the
unit diagonal; matrices with an eigenvalue below -1e-8 are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from .errors import NonConvergence, NotPositiveSemidefinite

_EIG_REJECT = -1e-8
_SINGULAR_TOL = 1e-10
_N_SHIFTS = 8
_N_START = 256
_MAX_ROUNDS = 11

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _first_primes(k: int) -> np.ndarray:
    primes = []
    cand = 2
    while len(primes) < k:
        if all(cand % p for p in primes):
            primes.append(cand)
        cand += 1
    return np.array(primes, dtype=float)


def nearest_correlation(matrix: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues and renormalize to a unit diagonal.

    Raises NotPositiveSemidefinite when the smallest eigenvalue is below
    -1e-8 before repair; tinier negative eigenvalues are treated as noise.
    """
    r = np.asarray(matrix, dtype=float)
    r = 0.5 * (r + r.T)
    vals, vecs = np.linalg.eigh(r)
    if vals[0] < _EIG_REJECT:
        raise NotPositiveSemidefinite(
            f"smallest eigenvalue {vals[0]:.3e} below repair tolerance"
        )
    if vals[0] >= 0 and np.allclose(np.diag(r), 1.0, atol=1e-12):
        out = r.copy()
        np.fill_diagonal(out, 1.0)
        return out
    fixed = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    d = np.sqrt(np.clip(np.diag(fixed), 1e-300, None))
    fixed = fixed / np.outer(d, d)
    fixed = 0.5 * (fixed + fixed.T)
    np.fill_diagonal(fixed, 1.0)
    return fixed


@dataclass(frozen=True)
class CorrelationMatrix:
    """A validated, PSD-repaired correlation matrix."""

    entries: np.ndarray

    @classmethod
    def from_matrix(cls, matrix) -> "CorrelationMatrix":
        r = np.asarray(matrix, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError(f"correlation matrix must be square, got {r.shape}")
        if not np.allclose(r, r.T, atol=1e-10):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(r), 1.0, atol=1e-8):
            raise ValueError("correlation matrix must have a unit diagonal")
        if np.any(np.abs(r) > 1.0 + 1e-8):
            raise ValueError("correlations must lie in [-1, 1]")
        repaired = nearest_correlation(np.clip(r, -1.0, 1.0))
        repaired.setflags(write=False)
        return cls(entries=repaired)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def _as_corr_array(r) -> np.ndarray:
    if isinstance(r, CorrelationMatrix):
        return r.entries
    return CorrelationMatrix.from_matrix(r).entries


def cov_to_corr(cov: np.ndarray) -> np.ndarray:
    """Correlation matrix implied by a covariance with positive diagonal."""
    d = np.sqrt(np.diag(cov))
    corr = cov / np.outer(d, d)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


def _truncated_mean(z: float) -> float:
    # E[Z | Z <= z] = -phi(z) / Phi(z), computed on the log scale
    return -float(np.exp(-0.5 * z * z - _LOG_SQRT_2PI - log_ndtr(z)))


def _reordered_cholesky(r: np.ndarray, c: float) -> np.ndarray:
    """Pivoted Cholesky factor ordered for the equicoordinate integrand.

    At each step the remaining variable with the smallest conditional
    probability moves to the front. Exhausted pivots (singular PSD input)
    produce a zero column; the integrand treats those dimensions as
    deterministic.
    """
    a = r.copy()
    s = a.shape[0]
    low = np.zeros((s, s))
    y = np.zeros(s)
    for i in range(s):
        best, best_p = i, np.inf
        for j in range(i, s):
            resid = a[j, j] - low[j, :i] @ low[j, :i]
            num = c - low[j, :i] @ y[:i]
            if resid > _SINGULAR_TOL:
                pj = ndtr(num / np.sqrt(resid))
            else:
                pj = 1.0 if num >= 0 else 0.0
            if pj < best_p:
                best, best_p = j, pj
        if best != i:
            a[[i, best], :] = a[[best, i], :]
            a[:, [i, best]] = a[:, [best, i]]
            low[[i, best], :i] = low[[best, i], :i]
        resid = a[i, i] - low[i, :i] @ low[i, :i]
        if resid > _SINGULAR_TOL:
            low[i, i] = np.sqrt(resid)
            if i + 1 < s:
                low[i + 1 :, i] = (
                    a[i + 1 :, i] - low[i + 1 :, :i] @ low[i, :i]
                ) / low[i, i]
            z = (c - low[i, :i] @ y[:i]) / low[i, i]
            y[i] = _truncated_mean(z)
        # else: dimension is deterministic given its predecessors; the
        # residual column of a PSD matrix is zero, so leave the column zero.
    return low


def _sov_products(low: np.ndarray, c: float, w: np.ndarray) -> np.ndarray:
    """Separated integrand values at uniform points w of shape (N, S-1)."""
    n, s = w.shape[0], low.shape[0]
    if low[0, 0] > 0:
        e = np.full(n, ndtr(c / low[0, 0]))
    else:
        e = np.full(n, 1.0 if c >= 0 else 0.0)
    prod = e.copy()
    ys = np.empty((n, s - 1))
    for i in range(1, s):
        ys[:, i - 1] = ndtri(np.clip(e * w[:, i - 1], 1e-300, 1.0 - 1e-16))
        num = c - ys[:, :i] @ low[i, :i]
        if low[i, i] > 0:
            e = ndtr(num / low[i, i])
        else:
            e = (num >= 0).astype(float)
        prod *= e
    return prod


def mvn_orthant_cdf(
    c: float, r, tol: float = 1e-4, seed: int = 0
) -> tuple[float, float]:
    """P(Z_1 <= c, ..., Z_S <= c) for Z ~ N_S(0, R), with an error estimate.

    Returns (probability, error estimate); the estimate is three standard
    errors over the randomized lattice shifts. Raises NonConvergence when
    the estimate stays above ``tol`` at the point-count cap.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    corr = _as_corr_array(r)
    s = corr.shape[0]
    if s == 1:
        return float(ndtr(c)), 0.0

    low = _reordered_cholesky(corr, float(c))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), 91]))
    shifts = rng.random((_N_SHIFTS, s - 1))
    q = np.sqrt(_first_primes(s - 1))

    sums = np.zeros(_N_SHIFTS)
    counts = 0
    n_block = _N_START
    for _ in range(_MAX_ROUNDS):
        k = np.arange(counts + 1, counts + n_block + 1, dtype=float)
        if _N_SHIFTS * n_block * (s - 1) <= 4_000_000:
            pts = k[None, :, None] * q + shifts[:, None, :]
            pts = np.abs(2.0 * (pts - np.floor(pts)) - 1.0)
            vals = _sov_products(low, float(c), pts.reshape(-1, s - 1))
            sums += vals.reshape(_N_SHIFTS, n_block).sum(axis=1)
        else:
            kq = k[:, None] * q
            for j in range(_N_SHIFTS):
                pts = np.abs(2.0 * np.modf(kq + shifts[j])[0] - 1.0)
                sums[j] += _sov_products(low, float(c), pts).sum()
        counts += n_block
        means = sums / counts
        est = float(means.mean())
        err = 3.0 * float(means.std(ddof=1)) / np.sqrt(_N_SHIFTS)
        if err <= tol:
            return min(max(est, 0.0), 1.0), err
        n_block = counts  # double the total
    raise NonConvergence(
        f"orthant probability error estimate {err:.2e} above tol {tol:.2e} "
        f"after {counts} lattice points"
    )


def equicoordinate_quantile(
    r, p: float, tol: float = 1e-3, seed: int = 0, cdf_tol: float | None = None
) -> float:
    """Common limit c with P(Z_1 <= c, ..., Z_S <= c) = p for Z ~ N_S(0, R).

    Found by a safeguarded false-position search on the bracket
    [Phi^-1(p), Phi^-1(1 - (1 - p)/S)] (perfect correlation to Bonferroni),
    converged to width ``tol`` in c units; ties resolve to the larger,
    conservative end. ``cdf_tol`` bounds the Monte-Carlo error of each CDF
    evaluation (default 1e-4).
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    corr = _as_corr_array(r)
    s = corr.shape[0]
    if s == 1:
        return float(ndtri(p))
    if cdf_tol is None:
        cdf_tol = 1e-4

    lo = float(ndtri(p))
    hi = float(ndtri(1.0 - (1.0 - p) / s))
    g_lo = -(1.0 - p) * (1.0 - 1.0 / s)  # exact at perfect correlation
    g_hi = (1.0 - p) * 0.25  # placeholder magnitude for false position

    for it in range(60):
        if hi - lo <= tol:
            break
        width = hi - lo
        # false-position candidate, safeguarded towards bisection
        if g_hi > 0 > g_lo and it % 3 != 2:
            cand = (lo * g_hi - hi * g_lo) / (g_hi - g_lo)
            cand = min(max(cand, lo + 0.1 * width), hi - 0.1 * width)
        else:
            cand = 0.5 * (lo + hi)
        prob, _ = mvn_orthant_cdf(
            cand, corr, tol=cdf_tol, seed=int(seed) * 613 + it
        )
        g = prob - p
        if g < 0:
            lo, g_lo = cand, g
        else:
            hi, g_hi = cand, g
    return hi


# ---------------------------------------------------------------------------
# Bivariate normal CDF (vectorized), used for latent-correlation solving
# ---------------------------------------------------------------------------

_GL_X = np.array(
    [
        0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
        0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
        0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
        0.07652652113349733,
    ]
)
_GL_W = np.array(
    [
        0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
        0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
        0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
        0.1527533871307259,
    ]
)
# both half-rules folded into one weight/node set, as column vectors
_GL_XS = np.concatenate([_GL_X, -_GL_X])[:, None]
_GL_WS = np.concatenate([_GL_W, _GL_W])[:, None]


def _bvn_upper(dh: np.ndarray, dk: np.ndarray, r: np.ndarray) -> np.ndarray:
    """P(X > dh, Y > dk) for standard bivariate normal with correlation r.

    Drezner-Wesolowsky Gauss-Legendre scheme as modified by Genz; accurate
    to ~1e-14 and vectorized over same-shape inputs.
    """
    h = np.asarray(dh, dtype=float)
    k = np.asarray(dk, dtype=float)
    rho = np.asarray(r, dtype=float)
    h, k, rho = np.broadcast_arrays(h, k, rho)
    out = np.empty(h.shape)

    mild = np.abs(rho) < 0.925
    if np.any(mild):
        hm, km, rm = h[mild], k[mild], rho[mild]
        hk = hm * km
        hs = 0.5 * (hm * hm + km * km)
        asr = np.arcsin(rm)
        sn = np.sin(0.5 * asr * (1.0 + _GL_XS))
        total = (_GL_WS * np.exp((sn * hk - hs) / (1.0 - sn * sn))).sum(axis=0)
        out[mild] = total * asr / (4.0 * np.pi) + ndtr(-hm) * ndtr(-km)

    steep = ~mild
    if np.any(steep):
        hm, km, rm = h[steep], k[steep], rho[steep]
        neg = rm < 0
        km = np.where(neg, -km, km)
        bvn = np.zeros_like(hm)
        interior = np.abs(rm) < 1.0
        if np.any(interior):
            hi, ki = hm[interior], km[interior]
            ri = rm[interior]
            hki = hi * ki
            ass = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(ass)
            bs = (hi - ki) ** 2
            cc = (4.0 - hki) / 8.0
            dd = (12.0 - hki) / 16.0
            asr0 = -(bs / ass + hki) / 2.0
            with np.errstate(under="ignore", over="ignore", invalid="ignore"):
                acc = np.where(
                    asr0 > -100.0,
                    a
                    * np.exp(asr0)
                    * (1.0 - cc * (bs - ass) * (1.0 - dd * bs / 5.0) / 3.0
                       + cc * dd * ass * ass / 5.0),
                    0.0,
                )
                b = np.sqrt(bs)
                sp = np.sqrt(2.0 * np.pi) * ndtr(-b / a)
                acc -= np.where(
                    -hki < 100.0,
                    np.exp(-hki / 2.0) * sp * b
                    * (1.0 - cc * bs * (1.0 - dd * bs / 5.0) / 3.0),
                    0.0,
                )
                a2 = a / 2.0
                xs = (a2 * (1.0 + _GL_XS)) ** 2
                rs = np.sqrt(1.0 - xs)
                asr_i = -(bs / xs + hki) / 2.0
                spi = 1.0 + cc * xs * (1.0 + dd * xs)
                epi = np.exp(-hki * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                acc += a2 * (
                    _GL_WS
                    * np.where(asr_i > -100.0, np.exp(asr_i) * (epi - spi), 0.0)
                ).sum(axis=0)
            bvn[interior] = -acc / (2.0 * np.pi)
        pos = rm > 0
        bvn = np.where(pos, bvn + ndtr(-np.maximum(hm, km)), bvn)
        bvn = np.where(
            ~pos, -bvn + np.maximum(0.0, ndtr(-hm) - ndtr(-km)), bvn
        )
        out[steep] = bvn

    return np.clip(out, 0.0, 1.0)


def bvn_cdf(h, k, rho) -> np.ndarray:
    """P(X <= h, Y <= k) for a standard bivariate normal with correlation rho."""
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    return _bvn_upper(-h, -k, rho)

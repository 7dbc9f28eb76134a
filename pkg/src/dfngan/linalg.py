"""Dense real linear algebra: real Schur form, spectra and departure from normality.

The Schur solver is a Hessenberg reduction followed by Francis double-shift
QR sweeps with accumulated Householder reflectors. Everything here is a pure
function of its inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroSpectrum, ConvergenceFailure, DefectiveMatrix, NotPSD

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps

# Round-off clamps in dfn(). Observational only; never read by the library.
clamp_count = 0


@dataclass(frozen=True)
class SchurForm:
    """Real Schur factorisation ``m = q @ t @ q.T``."""

    q: np.ndarray
    t: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.q @ self.t @ self.q.T


def _as_square(m) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def frobenius_norm_sq(m) -> float:
    a = np.asarray(m, dtype=float)
    return float(np.sum(a * a))


def _householder(x: np.ndarray):
    """Return (v, beta) with (I - beta v v^T) x = -sign(x0) |x| e1, or beta=0."""
    v = np.array(x, dtype=float)
    sigma = float(np.dot(v[1:], v[1:]))
    if sigma == 0.0:
        return v, 0.0
    alpha = np.sqrt(v[0] * v[0] + sigma)
    v[0] = v[0] + alpha if v[0] >= 0 else v[0] - alpha
    beta = 2.0 / float(np.dot(v, v))
    return v, beta


def hessenberg_reduce(m):
    """Orthogonal reduction to upper-Hessenberg form.

    Returns ``(h, q)`` with ``q @ h @ q.T == m``. Columns that are already
    reduced are left untouched, so Hessenberg input comes back unchanged with
    ``q = I``.
    """
    h = _as_square(m)
    n = h.shape[0]
    q = np.eye(n)
    for k in range(n - 2):
        v, beta = _householder(h[k + 1:, k])
        if beta == 0.0:
            continue
        h[k + 1:, k:] -= beta * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= beta * np.outer(h[:, k + 1:] @ v, v)
        q[:, k + 1:] -= beta * np.outer(q[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h, q


def _apply_left(h, v, beta, rows, col0):
    blk = h[rows, col0:]
    blk -= beta * np.outer(v, v @ blk)
    h[rows, col0:] = blk


def _apply_right(a, v, beta, cols, row_end):
    blk = a[:row_end, cols]
    blk -= beta * np.outer(blk @ v, v)
    a[:row_end, cols] = blk


def _francis_step(h, q, lo, hi, exceptional=False):
    """One implicit double-shift sweep on the active window h[lo:hi+1, lo:hi+1]."""
    n = h.shape[0]
    if exceptional:
        w = abs(h[hi, hi - 1]) + abs(h[hi - 1, hi - 2] if hi - 2 >= lo else 0.0)
        s = 1.5 * w
        t = w * w
    else:
        s = h[hi - 1, hi - 1] + h[hi, hi]
        t = h[hi - 1, hi - 1] * h[hi, hi] - h[hi - 1, hi] * h[hi, hi - 1]
    x = h[lo, lo] * h[lo, lo] + h[lo, lo + 1] * h[lo + 1, lo] - s * h[lo, lo] + t
    y = h[lo + 1, lo] * (h[lo, lo] + h[lo + 1, lo + 1] - s)
    z = h[lo + 1, lo] * h[lo + 2, lo + 1]
    for k in range(lo, hi - 1):
        v, beta = _householder(np.array([x, y, z]))
        rows = slice(k, k + 3)
        if beta != 0.0:
            r = max(lo, k - 1)
            _apply_left(h, v, beta, rows, r)
            _apply_right(h, v, beta, rows, min(k + 3, hi) + 1)
            _apply_right(q, v, beta, rows, n)
        if k > lo:
            h[k + 1, k - 1] = 0.0
            h[k + 2, k - 1] = 0.0
        x = h[k + 1, k]
        y = h[k + 2, k]
        if k < hi - 2:
            z = h[k + 3, k]
    v, beta = _householder(np.array([x, y]))
    if beta != 0.0:
        rows = slice(hi - 1, hi + 1)
        _apply_left(h, v, beta, rows, hi - 2)
        _apply_right(h, v, beta, rows, hi + 1)
        _apply_right(q, v, beta, rows, n)
    if hi - 2 >= lo:
        h[hi, hi - 2] = 0.0


def _split_2x2(h, q, k):
    """Triangularise the 2x2 block at (k, k) when its eigenvalues are real."""
    a, b = h[k, k], h[k, k + 1]
    c, d = h[k + 1, k], h[k + 1, k + 1]
    if c == 0.0:
        return
    p = 0.5 * (a - d)
    disc = p * p + b * c
    if disc < 0.0:
        return
    mu = 0.5 * (a + d) + np.copysign(np.sqrt(disc), p) if p != 0.0 else 0.5 * (a + d) + np.sqrt(disc)
    # eigenvector of the block for mu; pick the better-conditioned formula
    e1 = np.array([b, mu - a])
    e2 = np.array([mu - d, c])
    e = e1 if np.dot(e1, e1) >= np.dot(e2, e2) else e2
    nrm = np.hypot(e[0], e[1])
    if nrm == 0.0:
        return
    cs, sn = e[0] / nrm, e[1] / nrm
    g = np.array([[cs, -sn], [sn, cs]])
    n = h.shape[0]
    h[k:k + 2, :] = g.T @ h[k:k + 2, :]
    h[:, k:k + 2] = h[:, k:k + 2] @ g
    q[:, k:k + 2] = q[:, k:k + 2] @ g
    h[k + 1, k] = 0.0


def real_schur(m, tol: float = EPS, max_sweeps: int | None = None) -> SchurForm:
    """Real Schur decomposition by Francis double-shift QR.

    A subdiagonal entry is deflated once it falls below
    ``tol * (|h[i, i]| + |h[i+1, i+1]|)``, or below ``tol * EPS * |m|_F`` so
    that graded blocks far under round-off cannot stall the sweep. 2x2 diagonal blocks that remain
    carry complex-conjugate eigenvalue pairs; blocks with a real pair are
    split so that ``t`` is as triangular as the spectrum allows.

    Raises
    ------
    ConvergenceFailure
        If more than ``max_sweeps`` (default ``30 * n``) QR sweeps are needed.
    """
    a = _as_square(m)
    # power-of-two scaling is exact and keeps the shift polynomial away from
    # under/overflow for very small or very large inputs
    mx = float(np.abs(a).max()) if a.size else 0.0
    pow2 = 2.0 ** np.round(np.log2(mx)) if mx > 0 else 1.0
    h, q = hessenberg_reduce(a / pow2)
    n = h.shape[0]
    if max_sweeps is None:
        max_sweeps = 30 * max(n, 1)
    scale = np.sqrt(frobenius_norm_sq(h)) or 1.0
    floor = tol * EPS * scale
    hi = n - 1
    its = 0
    sweeps = 0
    while hi >= 0:
        lo = hi
        while lo > 0:
            s = abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])
            if s == 0.0:
                s = scale
            if abs(h[lo, lo - 1]) <= max(tol * s, floor):
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            hi -= 1
            its = 0
            continue
        if lo == hi - 1:
            _split_2x2(h, q, hi - 1)
            hi -= 2
            its = 0
            continue
        if sweeps >= max_sweeps:
            raise ConvergenceFailure(f"no convergence after {sweeps} QR sweeps (n={n})")
        its += 1
        sweeps += 1
        _francis_step(h, q, lo, hi, exceptional=its in (10, 20))
    return SchurForm(q=q, t=h * pow2)


def schur_eigenvalues(t: np.ndarray) -> np.ndarray:
    """Eigenvalues read off the diagonal blocks of a quasi-triangular matrix."""
    n = t.shape[0]
    out = np.empty(n, dtype=complex)
    i = 0
    while i < n:
        if i + 1 < n and t[i + 1, i] != 0.0:
            a, b, c, d = t[i, i], t[i, i + 1], t[i + 1, i], t[i + 1, i + 1]
            p = 0.5 * (a - d)
            disc = p * p + b * c
            re = 0.5 * (a + d)
            if disc < 0:
                im = np.sqrt(-disc)
                out[i], out[i + 1] = complex(re, im), complex(re, -im)
            else:
                r = np.sqrt(disc)
                out[i], out[i + 1] = re + r, re - r
            i += 2
        else:
            out[i] = t[i, i]
            i += 1
    return out


BACKENDS = ("schur", "lapack")


def eigenvalues(m, tol: float = EPS, max_sweeps: int | None = None,
                backend: str = "schur") -> np.ndarray:
    """Complex eigenvalues of a real square matrix (conjugate pairs adjacent).

    ``backend="lapack"`` delegates to ``numpy.linalg.eigvals``; it exists for
    training loops where the pure-numpy sweep is too slow.
    """
    if backend == "lapack":
        return np.linalg.eigvals(_as_square(m)).astype(complex)
    if backend != "schur":
        raise ValueError(f"unknown eigen backend {backend!r}")
    return schur_eigenvalues(real_schur(m, tol=tol, max_sweeps=max_sweeps).t)


def dfn(m, spectrum=None, backend: str = "schur") -> float:
    """Departure from normality: ``||m||_F^2 - sum |lambda_i|^2``, clamped at 0.

    Zero exactly for normal matrices up to round-off, positive otherwise.
    """
    global clamp_count
    a = _as_square(m)
    lam = eigenvalues(a, backend=backend) if spectrum is None else np.asarray(spectrum)
    val = frobenius_norm_sq(a) - float(np.sum(np.abs(lam) ** 2))
    if val < 0.0:
        clamp_count += 1
        return 0.0
    return val


def dfn_from_schur(form: SchurForm) -> float:
    """Departure from normality measured on the Schur factor itself.

    Mass strictly above the diagonal blocks, plus the non-normal excess of
    each 2x2 complex block. Used to cross-check :func:`dfn`.
    """
    t = form.t
    lam = schur_eigenvalues(t)
    return max(0.0, frobenius_norm_sq(t) - float(np.sum(np.abs(lam) ** 2)))


def _inverse_iteration(a: np.ndarray, lam: complex, steps: int = 3) -> np.ndarray:
    n = a.shape[0]
    shift = lam + 1e3 * EPS * (1.0 + np.sqrt(frobenius_norm_sq(a)))
    mat = a.astype(complex) - shift * np.eye(n)
    x = np.ones(n, dtype=complex) + 0.01 * np.arange(n)
    x /= np.linalg.norm(x)
    for _ in range(steps):
        try:
            x = np.linalg.solve(mat, x)
        except np.linalg.LinAlgError:
            x = np.linalg.lstsq(mat, x, rcond=None)[0]
        x /= np.linalg.norm(x)
    k = int(np.argmax(np.abs(x)))
    return x * (abs(x[k]) / x[k])


def eigenvectors(m, spectrum=None, resid_tol: float = 1e-6):
    """Right and left eigenvectors for each eigenvalue.

    Right vectors satisfy ``m @ x = lam * x``; left vectors satisfy
    ``y @ m = lam * y`` (plain transpose, not conjugate). Both have unit
    2-norm and their largest entry real positive.

    Raises
    ------
    DefectiveMatrix
        If an eigenpair residual exceeds ``resid_tol * ||m||_F``.
    """
    a = _as_square(m)
    lam = eigenvalues(a) if spectrum is None else np.asarray(spectrum, dtype=complex)
    nrm = np.sqrt(frobenius_norm_sq(a))
    right, left = [], []
    for li in lam:
        x = _inverse_iteration(a, li)
        y = _inverse_iteration(a.T, li)
        rx = np.linalg.norm(a @ x - li * x)
        ry = np.linalg.norm(y @ a - li * y)
        if max(rx, ry) > resid_tol * max(nrm, 1.0):
            raise DefectiveMatrix(f"eigenpair residual {max(rx, ry):.3e} for lambda={li:.6g}")
        right.append(x)
        left.append(y)
    return right, left


def dfn_gradient(m, sep_tol: float | None = None, spectrum=None,
                 backend: str = "schur") -> np.ndarray:
    """Analytic gradient of :func:`dfn` with respect to the entries of ``m``.

    Each simple eigenvalue moves as ``d lam = y^T dM x / (y^T x)``, which
    gives ``2 m - sum_i 2 Re(conj(lam_i) y_i x_i^T / (y_i^T x_i))``.
    Eigenvalues at (numerical) zero drop out because of the ``conj(lam)``
    factor.

    Raises
    ------
    DefectiveMatrix
        If two weighted eigenvalues are closer than ``sep_tol``
        (default ``1e-6 * ||m||_F``) or an eigenpair cannot be resolved.
        Use :func:`dfn_gradient_fd` as the fallback.
    """
    a = _as_square(m)
    nrm = np.sqrt(frobenius_norm_sq(a))
    if sep_tol is None:
        sep_tol = 1e-6 * nrm
    if backend == "lapack" and spectrum is None:
        return _dfn_gradient_lapack(a, nrm, sep_tol)
    lam = eigenvalues(a, backend=backend) if spectrum is None else np.asarray(spectrum, dtype=complex)
    grad = 2.0 * a
    if nrm == 0.0:
        return grad
    idx = _check_gaps(lam, nrm, sep_tol)
    if idx.size == 0:
        return grad
    right, left = eigenvectors(a, lam[idx])
    for li, x, y in zip(lam[idx], right, left):
        denom = y @ x
        if abs(denom) < 1e-14:
            raise DefectiveMatrix(f"left/right eigenvectors orthogonal for lambda={li:.6g}")
        grad -= 2.0 * np.real(np.conj(li) * np.outer(y, x) / denom)
    return grad


def _check_gaps(lam, nrm, sep_tol):
    zero = 1e-12 * max(float(np.max(np.abs(lam))), nrm)
    idx = np.flatnonzero(np.abs(lam) > zero)
    if idx.size > 1:
        sub = lam[idx]
        gaps = np.abs(sub[:, None] - sub[None, :]) + np.diag(np.full(idx.size, np.inf))
        if float(gaps.min()) <= sep_tol:
            raise DefectiveMatrix(f"eigenvalue gap {float(gaps.min()):.3e} <= {sep_tol:.3e}")
    return idx


def _dfn_gradient_lapack(a, nrm, sep_tol):
    # with Y = V^{-1}: sum_i conj(lam_i) outer(Y[i], V[:, i]) = (V diag(conj lam) Y)^T
    lam, vec = np.linalg.eig(a)
    _check_gaps(lam, nrm, sep_tol)
    if np.linalg.cond(vec) > 1e10:
        # zero eigenvalues may be defective; the per-eigenpair path skips them
        return dfn_gradient(a, sep_tol=sep_tol, spectrum=lam)
    inv = np.linalg.inv(vec)
    return 2.0 * a - 2.0 * np.real((vec * np.conj(lam)) @ inv).T


def dfn_gradient_fd(m, step: float | None = None, backend: str = "schur") -> np.ndarray:
    """Central-difference gradient of :func:`dfn`; O(n^2) evaluations."""
    a = _as_square(m)
    if step is None:
        step = 1e-5 * (1.0 + np.sqrt(frobenius_norm_sq(a)))
    grad = np.empty_like(a)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            old = a[i, j]
            a[i, j] = old + step
            fp = dfn(a, backend=backend)
            a[i, j] = old - step
            fm = dfn(a, backend=backend)
            a[i, j] = old
            grad[i, j] = (fp - fm) / (2.0 * step)
    return grad


def dfn_gradient_or_fd(m, sep_tol: float | None = None, backend: str = "schur") -> np.ndarray:
    try:
        return dfn_gradient(m, sep_tol=sep_tol, backend=backend)
    except DefectiveMatrix as exc:
        log.debug("dfn_gradient fell back to finite differences: %s", exc)
        return dfn_gradient_fd(m, backend=backend)


def suggest_epsilon(batch, eps_min: float = 1e-6, zero_rel: float = 1e-12) -> float:
    """Largest-to-smallest eigenvalue modulus ratio, minimised over a batch.

    Moduli below ``zero_rel * max|lambda|`` are ignored in the denominator.
    """
    mats = list(batch)
    if not mats:
        raise ValueError("empty batch")
    best = np.inf
    for m in mats:
        mod = np.abs(eigenvalues(m))
        top = float(mod.max()) if mod.size else 0.0
        nz = mod[mod > zero_rel * top]
        if top == 0.0 or nz.size == 0:
            raise AllZeroSpectrum("every eigenvalue is below the zero threshold")
        best = min(best, top / float(nz.min()))
    return max(float(eps_min), best)


def dfn_epsilon_bound(samples, spacing: float, rtol: float = 1e-6) -> float:
    """Interpolation-error bound ``max|g''| / 8 * h^2`` from uniform samples.

    ``samples`` are ``(x, g(x))`` pairs; ``g''`` is estimated with second
    central differences.
    """
    pts = sorted((float(x), float(g)) for x, g in samples)
    if len(pts) < 3:
        raise ValueError("need at least 3 samples")
    h = float(spacing)
    if h <= 0:
        raise ValueError("spacing must be positive")
    xs = np.array([p[0] for p in pts])
    gs = np.array([p[1] for p in pts])
    if not np.allclose(np.diff(xs), h, rtol=rtol, atol=rtol * h):
        raise ValueError("samples are not uniformly spaced at the given spacing")
    d2 = (gs[2:] - 2.0 * gs[1:-1] + gs[:-2]) / (h * h)
    return float(np.max(np.abs(d2))) / 8.0 * h * h


def matrix_sqrt_psd(m, tol: float = 1e-8) -> np.ndarray:
    """Symmetric PSD square root via a symmetric eigendecomposition.

    Raises
    ------
    NotPSD
        If an eigenvalue is below ``-tol * max(1, max|eig|)``.
    """
    a = _as_square(m)
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    floor = tol * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if w.size and float(w.min()) < -floor:
        raise NotPSD(f"negative eigenvalue {float(w.min()):.3e}")
    r = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return 0.5 * (r + r.T)

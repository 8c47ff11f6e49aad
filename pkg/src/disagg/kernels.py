"""Hot loop of the latent sampler: one Dirichlet MH sweep over all buckets.

Two interchangeable kernels implement the sweep, a numba ``@njit`` loop and a
vectorized numpy version built on ``reduceat``. Both consume the same random
draws (gamma variates and uniforms from one ``numpy.random.Generator``), so a
backend switch changes results only through floating point rounding.

State is kept flat with cached ``log x`` and ``lgamma(delta * x)`` so each
proposed coordinate costs one ``exp`` and one ``lgamma``.
"""
import math

import numpy as np
from scipy.special import gammaln

from . import _backend
from ._backend import njit
from .model import log_gamma_variates

MIN_CONCENTRATION = 1e-8

LOGNORMAL = 0
NORMAL = 1
_KINDS = {"lognormal": LOGNORMAL, "normal": NORMAL}


@njit(cache=True, nogil=True)
def _lgamma_nb(a, out):
    for k in range(a.size):
        out[k] = math.lgamma(a[k])


@njit(cache=True, nogil=True)
def _sweep_nb(x, logx, lgx, xs, lxs, lgs, offsets, y, logy, delta, lg, logu,
              kind, mu, tau, joint, accepted):
    K = y.size
    total = 0.0
    n_under = 0
    for b in range(K):
        s = offsets[b]
        e = offsets[b + 1]
        if e - s == 1:
            if not joint:
                accepted[b] += 1
            continue
        m = lg[s]
        for j in range(s + 1, e):
            if lg[j] > m:
                m = lg[j]
        acc = 0.0
        for j in range(s, e):
            acc += math.exp(lg[j] - m)
        lse = m + math.log(acc)
        d = delta[b]
        lr = 0.0
        under = False
        for j in range(s, e):
            lnew = logy[b] + lg[j] - lse
            xnew = math.exp(lnew)
            c = d * xnew
            cold = d * x[j]
            if c < MIN_CONCENTRATION or cold < MIN_CONCENTRATION:
                under = True
                break
            g = math.lgamma(c)
            xs[j] = xnew
            lxs[j] = lnew
            lgs[j] = g
            if kind == LOGNORMAL:
                lr += (-lnew - 0.5 * tau * (lnew - mu) ** 2) - (-logx[j] - 0.5 * tau * (logx[j] - mu) ** 2)
            else:
                lr += -0.5 * tau * ((xnew - mu) ** 2 - (x[j] - mu) ** 2)
            lr += (-g + (c - 1.0) * logx[j]) - (-lgx[j] + (cold - 1.0) * lnew)
        if under:
            n_under += 1
            lr = -np.inf
        elif lr != lr:
            return b, n_under
        if joint:
            total += lr
        elif logu[b] < lr:
            accepted[b] += 1
            for j in range(s, e):
                x[j] = xs[j]
                logx[j] = lxs[j]
                lgx[j] = lgs[j]
    if joint and logu[0] < total:
        for b in range(K):
            accepted[b] += 1
            s = offsets[b]
            e = offsets[b + 1]
            if e - s == 1:
                continue
            for j in range(s, e):
                x[j] = xs[j]
                logx[j] = lxs[j]
                lgx[j] = lgs[j]
    return -1, n_under


def _sweep_np(x, logx, lgx, offsets, y, logy, delta, lg, logu, kind, mu, tau,
              joint, accepted, multi, starts, counts):
    # only buckets with n > 1 reach here; ``starts``/``counts`` index them
    m = np.maximum.reduceat(lg, starts)
    lse = m + np.log(np.add.reduceat(np.exp(lg - np.repeat(m, counts)), starts))
    d = np.repeat(delta[multi], counts)
    lnew = np.repeat(logy[multi] - lse, counts) + lg
    xnew = np.exp(lnew)
    c = d * xnew
    cold = d * x
    under = np.logical_or.reduceat((c < MIN_CONCENTRATION) | (cold < MIN_CONCENTRATION), starts)
    g = gammaln(c)
    if kind == LOGNORMAL:
        like = (-lnew - 0.5 * tau * (lnew - mu) ** 2) - (-logx - 0.5 * tau * (logx - mu) ** 2)
    else:
        like = -0.5 * tau * ((xnew - mu) ** 2 - (x - mu) ** 2)
    q = (-g + (c - 1.0) * logx) - (-lgx + (cold - 1.0) * lnew)
    lr = np.add.reduceat(like + q, starts)
    lr[under] = -np.inf
    nan = np.flatnonzero(np.isnan(lr))
    if nan.size:
        return int(multi[nan[0]]), int(under.sum())
    if joint:
        take = np.full(lr.size, logu[0] < lr.sum())
    else:
        take = logu[multi] < lr
    accepted[multi[take]] += 1
    mask = np.repeat(take, counts)
    x[mask] = xnew[mask]
    logx[mask] = lnew[mask]
    lgx[mask] = g[mask]
    return -1, int(under.sum())


class BucketSweeper:
    """Latent state of all buckets plus the sweep kernel that updates it.

    ``x`` is the flat latent vector. ``accepted`` counts accepted moves per
    bucket since the last :meth:`reset_counts`.
    """

    def __init__(self, x, n, y, delta, kind="lognormal", joint=False, backend=None):
        self.backend = _backend.resolve(backend)
        self.n = np.asarray(n, dtype=np.int64)
        self.offsets = np.concatenate(([0], np.cumsum(self.n))).astype(np.int64)
        self.y = np.asarray(y, dtype=float)
        self.logy = np.log(self.y)
        self.x = np.array(x, dtype=float)
        self.logx = np.log(self.x)
        self.kind = _KINDS[kind]
        self.joint = bool(joint)
        self.K = self.y.size
        self.accepted = np.zeros(self.K, dtype=np.int64)
        self.n_underflow = 0
        self._xs = np.empty_like(self.x)
        self._lxs = np.empty_like(self.x)
        self._lgs = np.empty_like(self.x)
        self._multi = np.flatnonzero(self.n > 1)
        # sub-vector of the flat state covering buckets with n > 1
        self._sel = np.concatenate(
            [np.arange(self.offsets[b], self.offsets[b + 1]) for b in self._multi]
        ) if self._multi.size else np.empty(0, dtype=np.int64)
        self._counts = self.n[self._multi]
        self._starts = np.concatenate(([0], np.cumsum(self._counts)[:-1])).astype(np.int64)
        self.set_delta(delta)

    def set_delta(self, delta):
        self.delta = np.array(delta, dtype=float)
        self._delta_rep = np.repeat(self.delta, self.n)
        self.lgx = self._lgamma(self._delta_rep * self.x)

    def _lgamma(self, a):
        if self.backend == "numba":
            out = np.empty_like(a)
            _lgamma_nb(a, out)
            return out
        return gammaln(a)

    def reset_counts(self):
        self.accepted[:] = 0

    def sweep(self, mu, tau, gen):
        """One MH update of every bucket (or one joint update) given theta.

        Returns the index of a bucket whose log ratio was NaN, else -1.
        """
        lg = log_gamma_variates(self._delta_rep * self.x, gen)
        logu = np.log(gen.random(1 if self.joint else self.K))
        if self.backend == "numba":
            bad, under = _sweep_nb(
                self.x, self.logx, self.lgx, self._xs, self._lxs, self._lgs,
                self.offsets, self.y, self.logy, self.delta, lg, logu,
                self.kind, float(mu), float(tau), self.joint, self.accepted,
            )
        else:
            bad, under = self._sweep_numpy(lg, logu, float(mu), float(tau))
        self.n_underflow += under
        return bad

    def _sweep_numpy(self, lg, logu, mu, tau):
        if not self.joint:
            single = self.n == 1
            self.accepted[single] += 1
        if not self._multi.size:
            if self.joint and logu[0] < 0.0:
                self.accepted += 1
            return -1, 0
        sel = self._sel
        if sel.size == self.x.size:
            x, logx, lgx = self.x, self.logx, self.lgx
            bad, under = _sweep_np(
                x, logx, lgx, self.offsets, self.y, self.logy, self.delta, lg, logu,
                self.kind, mu, tau, self.joint, self.accepted, self._multi,
                self._starts, self._counts,
            )
        else:
            x, logx, lgx = self.x[sel], self.logx[sel], self.lgx[sel]
            acc = np.zeros(self.K, dtype=np.int64)
            bad, under = _sweep_np(
                x, logx, lgx, self.offsets, self.y, self.logy, self.delta, lg[sel], logu,
                self.kind, mu, tau, self.joint, acc, self._multi,
                self._starts, self._counts,
            )
            self.x[sel], self.logx[sel], self.lgx[sel] = x, logx, lgx
            if self.joint and acc.any():
                acc[:] = 1
            self.accepted += acc
        return bad, under

    def sums(self):
        return np.add.reduceat(self.x, self.offsets[:-1])

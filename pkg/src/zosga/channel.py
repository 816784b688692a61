"""Spatially correlated Rician channels with distance path loss.

Statistical CSI (the deterministic Rician means) is drawn once per simulated
run and frozen; instantaneous CSI is redrawn for every channel realization.
All arrays may carry leading batch dimensions, one per independent run, so
that many Monte-Carlo runs advance in lockstep through one set of numpy calls.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


def build_exponential_correlation(r, n):
    """Exponential correlation matrix with entries ``r**|i-j|``."""
    if not 0.0 <= r < 1.0:
        raise ValueError(f"correlation coefficient must lie in [0, 1), got {r}")
    if n < 1:
        raise ValueError("matrix size must be >= 1")
    idx = np.arange(n)
    return float(r) ** np.abs(idx[None, :] - idx[:, None]).astype(float)


def build_kronecker_correlation(horiz, vert, n=None):
    """Planar-array correlation ``horiz (x) vert`` (column-major grid ordering)."""
    out = np.kron(horiz, vert)
    if n is not None and out.shape[0] != n:
        raise ValueError(f"Kronecker factor sizes give {out.shape[0]} elements, scenario has {n}")
    return out


def correlation_sqrt(phi, tol=1e-12):
    """Hermitian square root ``S`` with ``S @ S^H == phi``.

    Eigenvalues below zero are clipped; anything more negative than
    ``tol * max|eig|`` means the input is not PSD and is rejected.
    """
    phi = np.asarray(phi)
    lam, q = np.linalg.eigh(phi)
    scale = max(1.0, np.abs(lam).max())
    if lam.min() < -tol * scale:
        raise ValueError(f"correlation matrix is not PSD (min eigenvalue {lam.min():.3e})")
    lam = np.clip(lam, 0.0, None)
    return (q * np.sqrt(lam)) @ q.conj().T


def path_loss(c0, alpha, d):
    """Amplitude path loss ``sqrt(c0 * d**-alpha)``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return np.sqrt(c0 * d ** (-float(alpha)))


def cscg(rng, shape):
    """Circularly symmetric complex Gaussian samples with unit total variance."""
    n = int(np.prod(shape))
    return (rng.standard_normal(2 * n).view(np.complex128) * np.sqrt(0.5)).reshape(shape)


def rician_weights(beta):
    """Amplitude weights ``(sqrt(b/(1+b)), sqrt(1/(1+b)))``; ``beta=inf`` is pure LOS."""
    if np.isinf(beta):
        return 1.0, 0.0
    return np.sqrt(beta / (1.0 + beta)), np.sqrt(1.0 / (1.0 + beta))


def sample_rician_link(los, beta, rng, left=None, right=None):
    """One Rician draw ``a*los + b*left @ V @ right`` with ``V`` i.i.d. CN(0, 1).

    ``left``/``right`` are correlation square roots; a vector link only uses
    ``left``.  ``None`` stands for the identity.
    """
    los = np.asarray(los, dtype=complex)
    a, b = rician_weights(beta)
    v = cscg(rng, los.shape)
    if left is not None:
        v = left @ v
    if right is not None:
        v = v @ right
    return a * los + b * v


@dataclass(frozen=True)
class StatisticalCsi:
    """Frozen Rician means (unit-variance CN draws, before path loss)."""

    F: tuple  # per IRS: (..., N_i, M_ap)
    v_r: tuple  # per IRS: (..., N_i, K)
    v_d: np.ndarray  # (..., M_total, K)

    def digest(self):
        h = hashlib.sha256()
        for a in (*self.F, *self.v_r, self.v_d):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    @staticmethod
    def stack(items):
        return StatisticalCsi(
            F=tuple(_frozen(np.stack(x)) for x in zip(*(s.F for s in items))),
            v_r=tuple(_frozen(np.stack(x)) for x in zip(*(s.v_r for s in items))),
            v_d=_frozen(np.stack([s.v_d for s in items])),
        )


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of every intermediate channel, path loss included.

    ``G[i]`` is the AP-to-IRS channel (N_i x M of its AP), ``h_r[i]`` holds the
    IRS-to-user channels as columns (N_i x K) and ``h_d`` the direct channels
    stacked over APs (M_total x K).  ``ap_rows[i]`` locates the AP serving IRS
    ``i`` inside the stacked transmit dimension.
    """

    G: tuple
    h_r: tuple
    h_d: np.ndarray
    ap_rows: tuple

    def digest(self):
        h = hashlib.sha256()
        for a in (*self.G, *self.h_r, self.h_d):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def run(self, r):
        """Slice run ``r`` out of a batched realization."""
        return ChannelRealization(
            G=tuple(g[r] for g in self.G),
            h_r=tuple(h[r] for h in self.h_r),
            h_d=self.h_d[r],
            ap_rows=self.ap_rows,
        )


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _is_identity(m):
    return np.array_equal(m, np.eye(m.shape[0]))


class ChannelModel:
    """Scenario-level channel statistics: correlation roots, path loss, Rician weights."""

    def __init__(self, scenario):
        self.scenario = scenario
        k = scenario.n_users
        corr = scenario.correlation
        pl = scenario.path_loss
        self.n_users = k
        self.ap_rows = scenario.ap_rows()
        self.irs_rows = tuple(self.ap_rows[s.ap] for s in scenario.irs)
        self.ap_antennas = tuple(ap.antennas for ap in scenario.aps)
        self.irs_sizes = tuple(s.n_elements for s in scenario.irs)

        # correlation square roots; None marks an identity so it can be skipped
        def root(phi):
            return None if _is_identity(phi) else correlation_sqrt(phi)

        self.ap_sqrt = tuple(root(build_exponential_correlation(corr.r_d, m)) for m in self.ap_antennas)
        self.irs_sqrt = tuple(
            root(
                build_kronecker_correlation(
                    build_exponential_correlation(corr.r_r, s.columns),
                    build_exponential_correlation(corr.r_r, s.rows),
                    s.n_elements,
                )
            )
            for s in scenario.irs
        )
        refl = []
        for s in scenario.irs:
            mats = [
                build_kronecker_correlation(
                    build_exponential_correlation(r, s.columns), build_exponential_correlation(r, s.rows)
                )
                for r in corr.r_rk
            ]
            if all(_is_identity(m) for m in mats):
                refl.append(None)
            else:
                refl.append(np.stack([correlation_sqrt(m) for m in mats]))
        self.refl_sqrt = tuple(refl)

        d_au, d_iu, d_ai = scenario.distances()
        self.loss_ap_user = path_loss(pl.c0, pl.alpha_ap_user, d_au)  # (K, A)
        self.loss_irs_user = path_loss(pl.c0, pl.alpha_irs_user, d_iu)  # (K, I)
        self.loss_ap_irs = path_loss(pl.c0, pl.alpha_ap_irs, d_ai) if len(d_ai) else np.zeros(0)
        # per-row direct-link loss laid out like h_d: (M_total, K)
        self.loss_direct = np.concatenate(
            [np.repeat(self.loss_ap_user[:, a][None, :], m, axis=0) for a, m in enumerate(self.ap_antennas)]
        )
        rc = scenario.rician
        self.w_au = rician_weights(rc.beta_ap_user)
        self.w_iu = rician_weights(rc.beta_irs_user)
        self.w_ai = rician_weights(rc.beta_ap_irs)

        self._shapes = (
            [(n, self.ap_antennas[s.ap]) for n, s in zip(self.irs_sizes, scenario.irs)]
            + [(n, k) for n in self.irs_sizes]
            + [(sum(self.ap_antennas), k)]
        )
        self._sizes = [a * b for a, b in self._shapes]
        self.n_innovations = sum(self._sizes)

    def draw_scsi(self, rng):
        """Draw the frozen Rician means for one run."""
        k = self.n_users
        F = tuple(_frozen(cscg(rng, (n, self.ap_antennas[s.ap]))) for n, s in zip(self.irs_sizes, self.scenario.irs))
        v_r = tuple(_frozen(cscg(rng, (n, k))) for n in self.irs_sizes)
        v_d = _frozen(cscg(rng, (sum(self.ap_antennas), k)))
        return StatisticalCsi(F=F, v_r=v_r, v_d=v_d)

    def _innovations(self, rngs):
        """I-CSI draws; one flat CN vector per run, split per link."""
        if isinstance(rngs, np.random.Generator):
            flat = cscg(rngs, (self.n_innovations,))
            lead = ()
        else:
            flat = np.stack([cscg(g, (self.n_innovations,)) for g in rngs])
            lead = (len(rngs),)
        parts, start = [], 0
        for shape, size in zip(self._shapes, self._sizes):
            parts.append(flat[..., start : start + size].reshape(lead + shape))
            start += size
        n_irs = len(self.irs_sizes)
        return parts[:n_irs], parts[n_irs : 2 * n_irs], parts[-1]

    def draw_realization(self, scsi, rngs):
        """One i.i.d. realization per run.

        ``rngs`` is a single Generator (unbatched ``scsi``) or a sequence of
        Generators, one per leading batch entry of ``scsi``.
        """
        F_inno, r_inno, d_inno = self._innovations(rngs)
        a_ai, b_ai = self.w_ai
        a_iu, b_iu = self.w_iu
        a_au, b_au = self.w_au

        G = []
        for i, s in enumerate(self.scenario.irs):
            x = F_inno[i]
            if self.irs_sqrt[i] is not None:
                x = self.irs_sqrt[i] @ x
            if self.ap_sqrt[s.ap] is not None:
                x = x @ self.ap_sqrt[s.ap]
            G.append(self.loss_ap_irs[i] * (a_ai * scsi.F[i] + b_ai * x))

        h_r = []
        for i in range(len(self.irs_sizes)):
            x = r_inno[i]
            if self.refl_sqrt[i] is not None:
                x = np.einsum("knm,...mk->...nk", self.refl_sqrt[i], x)
            h_r.append(self.loss_irs_user[:, i] * (a_iu * scsi.v_r[i] + b_iu * x))

        x = d_inno
        if any(r is not None for r in self.ap_sqrt):
            blocks = []
            for a, rows in enumerate(self.ap_rows):
                blk = x[..., rows, :]
                blocks.append(blk if self.ap_sqrt[a] is None else self.ap_sqrt[a] @ blk)
            x = np.concatenate(blocks, axis=-2)
        h_d = self.loss_direct * (a_au * scsi.v_d + b_au * x)
        return ChannelRealization(G=tuple(G), h_r=tuple(h_r), h_d=h_d, ap_rows=self.irs_rows)


def draw_realization(scenario, scsi, rng):
    """Convenience wrapper: one realization for one run of ``scenario``."""
    return ChannelModel(scenario).draw_realization(scsi, rng)

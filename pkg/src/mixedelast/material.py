"""Compressible Neo-Hookean law written in terms of the displacement gradient K.

All functions are vectorized over leading axes: ``K`` has shape (..., n, n).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InadmissibleState(ValueError):
    """det F <= 0 somewhere."""


@dataclass(frozen=True)
class NeoHookean:
    mu: float
    lam: float

    def __post_init__(self):
        if not (self.mu > 0 and self.lam > 0):
            raise ValueError("Lame parameters must be positive")

    @classmethod
    def from_engineering(cls, E, nu):
        return cls(E / (2 * (1 + nu)), E * nu / ((1 + nu) * (1 - 2 * nu)))

    @staticmethod
    def _kinematics(K):
        K = np.asarray(K, dtype=float)
        n = K.shape[-1]
        F = K + np.eye(n)
        # det(I + K) - 1 from the invariants of K: ln J stays accurate near J = 1
        trK = np.trace(K, axis1=-2, axis2=-1)
        Jm1 = trK + np.linalg.det(K)
        if n == 3:
            Jm1 = Jm1 + 0.5 * (trK ** 2 - np.einsum("...ij,...ji->...", K, K))
        if np.any(~(Jm1 > -1.0)):
            raise InadmissibleState(f"det F <= 0 (min {np.min(Jm1) + 1.0:.3e})")
        G = np.swapaxes(np.linalg.inv(F), -1, -2)  # F^{-T}
        return F, G, 2.0 * np.log1p(Jm1)

    def energy(self, K):
        F, _, lnI3 = self._kinematics(K)
        n = F.shape[-1]
        I1 = np.einsum("...ij,...ij->...", F, F)
        return 0.5 * self.mu * (I1 - n) - 0.5 * self.mu * lnI3 + 0.5 * self.lam * lnI3 ** 2

    def stress(self, K):
        """First Piola-Kirchhoff stress P(K) = dW/dF."""
        F, G, lnI3 = self._kinematics(K)
        return self.mu * F + (2.0 * self.lam * lnI3 - self.mu)[..., None, None] * G

    def tangent(self, K):
        """Fourth-order tangent A_IJRS = dP_IJ / dK_RS, shape (..., n, n, n, n)."""
        F, G, lnI3 = self._kinematics(K)
        n = F.shape[-1]
        eye = np.eye(n)
        c = (self.mu - 2.0 * self.lam * lnI3)[..., None, None, None, None]
        A = self.mu * np.einsum("IR,JS->IJRS", eye, eye)
        A = A + c * np.einsum("...IS,...RJ->...IJRS", G, G)
        A = A + 4.0 * self.lam * np.einsum("...IJ,...RS->...IJRS", G, G)
        return A

    def tangent_apply(self, K, M):
        """A(K) : M without forming the fourth-order tensor."""
        F, G, lnI3 = self._kinematics(K)
        M = np.asarray(M, dtype=float)
        Finv = np.swapaxes(G, -1, -2)
        GMtG = G @ np.swapaxes(M, -1, -2) @ G
        tr = np.einsum("...ij,...ji->...", Finv, M)
        return (self.mu * M + (self.mu - 2.0 * self.lam * lnI3)[..., None, None] * GMtG
                + 4.0 * self.lam * tr[..., None, None] * G)

"""Deterministic instance generation for experiment campaigns.

Instances are built from seeded spectra conjugated by Haar-distributed
unitary frames; spectra are translated so the separation between the two
channels equals the requested gap exactly, and couplings are rescaled to
sit at a prescribed fraction of the relevant solvability threshold.
"""

from __future__ import annotations

import math

import numpy as np

from .core import HermitianOperator, ec_norm, schatten_norm
from .riccati import RiccatiProblem
from .sylvester import SylvesterProblem
from .blockdiag import BlockOperatorMatrix

__all__ = [
    "rng_for",
    "haar_unitary",
    "hermitian_with_spectrum",
    "split_spectra",
    "sylvester_instance",
    "riccati_instance",
    "block_instance",
]


def rng_for(seed, trial=0):
    """Independent generator for (seed, trial); reproducible across runs."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),)))


def haar_unitary(rng, n):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(g)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def hermitian_with_spectrum(rng, spectrum):
    spectrum = np.asarray(spectrum, dtype=np.float64)
    frame = haar_unitary(rng, spectrum.size)
    return HermitianOperator.from_spectrum(spectrum, frame)


def split_spectra(rng, n_low, n_high, gap, width=3.0):
    """Spectra on both sides of an exact gap centered at zero.

    The low band sits in [-gap/2 - width, -gap/2] with its maximum pinned
    to -gap/2, the high band mirrors it, so the separation is exactly
    ``gap``.
    """
    low = rng.uniform(-gap / 2.0 - width, -gap / 2.0, size=n_low)
    low += -gap / 2.0 - low.max()
    high = rng.uniform(gap / 2.0, gap / 2.0 + width, size=n_high)
    high += gap / 2.0 - high.min()
    return np.sort(low), np.sort(high)


def _complex_gaussian(rng, rows, cols):
    return rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))


def sylvester_instance(rng, dim_a, dim_c, gap, width=3.0, layout="split", y_scale=1.0):
    """Linear-equation instance; ``layout='straddle'`` puts part of spec(A)
    below spec(C) so the semigroup representation is inapplicable."""
    if layout == "split":
        low, high = split_spectra(rng, dim_c, dim_a, gap, width)
        a = hermitian_with_spectrum(rng, high)
        c = hermitian_with_spectrum(rng, low)
    elif layout == "straddle":
        low, high = split_spectra(rng, dim_c, max(dim_a - 1, 1), gap, width)
        n_below = dim_a - high.size
        below = rng.uniform(low.min() - gap - width, low.min() - gap, size=n_below)
        if n_below:
            below += (low.min() - gap) - below.max()
        a = hermitian_with_spectrum(rng, np.sort(np.concatenate([high, below])))
        c = hermitian_with_spectrum(rng, low)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    y = y_scale * _complex_gaussian(rng, dim_c, dim_a)
    return SylvesterProblem(a, c, y)


def riccati_instance(rng, dim_a, dim_c, gap, margin=0.9, width=3.0):
    """Quadratic-equation instance scaled to ``margin`` times the strong threshold.

    B and D are rescaled jointly so sqrt(|B| |D|_ec) = margin * gap / 2.
    """
    low, high = split_spectra(rng, dim_c, dim_a, gap, width)
    a = hermitian_with_spectrum(rng, high)
    c = hermitian_with_spectrum(rng, low)
    b = _complex_gaussian(rng, dim_a, dim_c)
    d = _complex_gaussian(rng, dim_c, dim_a)
    product = schatten_norm(b, np.inf) * ec_norm(d, c.decomposition)
    scale = margin * (gap / 2.0) / math.sqrt(product)
    return RiccatiProblem(a, c, scale * b, scale * d)


def block_instance(rng, hypothesis, dim0, dim1, gap, margin=0.9, width=3.0,
                   coupling_scale=1.5):
    """Block instance tuned to one of the three solvability hypotheses.

    ``henorm``: coupling at ``margin`` times the partition-norm threshold
    sqrt(|B| min |B|_ec) = margin * gap / 2.  ``hbpi``: plain norm at
    ``margin`` * gap / pi.  ``hadl``: ordered spectra with coupling norm
    ``coupling_scale`` * gap (no smallness).
    """
    low, high = split_spectra(rng, dim1, dim0, gap, width)
    b01 = _complex_gaussian(rng, dim0, dim1)
    a0 = hermitian_with_spectrum(rng, high)
    a1 = hermitian_with_spectrum(rng, low)
    if hypothesis == "henorm":
        ec_min = min(
            ec_norm(b01, a0.decomposition), ec_norm(b01.conj().T, a1.decomposition)
        )
        scale = margin * (gap / 2.0) / math.sqrt(schatten_norm(b01, np.inf) * ec_min)
    elif hypothesis == "hbpi":
        scale = margin * (gap / math.pi) / schatten_norm(b01, np.inf)
    elif hypothesis == "hadl":
        # ordered spectra: spec(A0) entirely below spec(A1), coupling not small
        low0, high1 = split_spectra(rng, dim0, dim1, gap, width)
        a0 = hermitian_with_spectrum(rng, low0)
        a1 = hermitian_with_spectrum(rng, high1)
        scale = coupling_scale * gap / schatten_norm(b01, np.inf)
    else:
        raise ValueError(f"unknown hypothesis {hypothesis!r}")
    return BlockOperatorMatrix(a0, a1, scale * b01)

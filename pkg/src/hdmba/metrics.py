"""Paired and reference-free quality metrics for (H, W, B) cubes.

Paired: PSNR, SSIM, UQI, SAM. Reference-free: average gradient (AG).
SSIM and UQI are computed per band and averaged over bands.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
UQI_BLOCK = 8
AG_FORMULA = "mean(sqrt((Gx^2 + Gy^2) / 2)), forward differences, interior pixels"


class MetricError(ValueError):
    pass


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise MetricError(f"expected (H, W, B) cubes, got {a.shape}")
    return a, b


# ---------------------------------------------------------------------------------------
# PSNR


def psnr_band(a, b, peak: float = 1.0) -> np.ndarray:
    """Per-band PSNR in dB; ``inf`` where the band is identical."""
    a, b = _pair(a, b)
    mse = ((a - b) ** 2).mean(axis=(0, 1))
    with np.errstate(divide="ignore"):
        return np.where(mse > 0, 10.0 * np.log10(peak ** 2 / np.where(mse > 0, mse, 1.0)), np.inf)


def psnr(a, b, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE) with MSE over all voxels; ``inf`` for identical inputs."""
    a, b = _pair(a, b)
    mse = float(((a - b) ** 2).mean())
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 / mse)


# ---------------------------------------------------------------------------------------
# SSIM


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _valid_filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable weighted window sums over every fully-contained window position."""
    r = (len(g) - 1) // 2
    out = ndimage.correlate1d(img, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim_band(a, b, peak: float = 1.0) -> np.ndarray:
    a, b = _pair(a, b)
    h, w, nb = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise MetricError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    g = gaussian_window()
    c1, c2 = (SSIM_K1 * peak) ** 2, (SSIM_K2 * peak) ** 2
    out = np.empty(nb)
    for k in range(nb):
        x, y = a[..., k], b[..., k]
        mx, my = _valid_filter(x, g), _valid_filter(y, g)
        sxx = _valid_filter(x * x, g) - mx * mx
        syy = _valid_filter(y * y, g) - my * my
        sxy = _valid_filter(x * y, g) - mx * my
        smap = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
        out[k] = smap.mean()
    return out


def ssim(a, b, peak: float = 1.0) -> float:
    return float(ssim_band(a, b, peak).mean())


# ---------------------------------------------------------------------------------------
# UQI


def _block_sums(img: np.ndarray, n: int) -> np.ndarray:
    c = np.cumsum(np.cumsum(np.pad(img, ((1, 0), (1, 0))), axis=0), axis=1)
    return c[n:, n:] - c[:-n, n:] - c[n:, :-n] + c[:-n, :-n]


def uqi_band(a, b, block: int = UQI_BLOCK) -> np.ndarray:
    """Mean UQI over all block×block sliding windows, per band.

    Q = [2 s_ab / (s_a^2 + s_b^2)] * [2 m_a m_b / (m_a^2 + m_b^2)]. A factor with a
    zero denominator is left out of the product; a window where both are
    undefined (two identical-zero blocks) is skipped.
    """
    a, b = _pair(a, b)
    h, w, nb = a.shape
    if h < block or w < block:
        raise MetricError(f"image {h}x{w} smaller than the {block}x{block} UQI block")
    n = block * block
    out = np.empty(nb)
    for k in range(nb):
        x, y = a[..., k], b[..., k]
        mx, my = _block_sums(x, block) / n, _block_sums(y, block) / n
        vx = _block_sums(x * x, block) / n - mx * mx
        vy = _block_sums(y * y, block) / n - my * my
        cxy = _block_sums(x * y, block) / n - mx * my
        q, valid = _uqi_combine(mx, my, vx, vy, cxy)
        if not valid.any():
            raise MetricError("UQI undefined: every block is degenerate")
        out[k] = q[valid].mean()
    return out


def _uqi_combine(mx, my, vx, vy, cxy):
    # clean tiny negative variances from cancellation
    tol = 1e-12
    vx = np.where(np.abs(vx) < tol, 0.0, vx)
    vy = np.where(np.abs(vy) < tol, 0.0, vy)
    cxy = np.where((vx == 0) | (vy == 0), 0.0, cxy)
    den_s = vx + vy
    den_m = mx * mx + my * my
    has_s = den_s > 0
    has_m = den_m > tol
    s_term = np.where(has_s, 2 * cxy / np.where(has_s, den_s, 1.0), 1.0)
    m_term = np.where(has_m, 2 * mx * my / np.where(has_m, den_m, 1.0), 1.0)
    return s_term * m_term, has_s | has_m


def uqi(a, b, block: int = UQI_BLOCK) -> float:
    return float(uqi_band(a, b, block).mean())


# ---------------------------------------------------------------------------------------
# SAM and AG


def sam(a, b) -> float:
    """Mean spectral angle in radians over pixels where both spectra are nonzero."""
    a, b = _pair(a, b)
    if a.shape[2] < 2:
        raise MetricError("SAM needs at least 2 bands")
    na = np.linalg.norm(a, axis=2)
    nb = np.linalg.norm(b, axis=2)
    valid = (na > 0) & (nb > 0)
    if not valid.any():
        raise MetricError("SAM undefined: every pixel has a zero spectrum")
    ua = a[valid] / na[valid][:, None]
    ub = b[valid] / nb[valid][:, None]
    # 2*atan2(|u-v|, |u+v|) is exact near 0 where arccos(dot) is not
    ang = 2.0 * np.arctan2(np.linalg.norm(ua - ub, axis=1), np.linalg.norm(ua + ub, axis=1))
    return float(ang.mean())


def avg_gradient(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[..., None]
    if a.shape[0] < 2 or a.shape[1] < 2:
        raise MetricError("average gradient needs at least 2x2 pixels")
    gx = a[:-1, 1:] - a[:-1, :-1]
    gy = a[1:, :-1] - a[:-1, :-1]
    return float(np.sqrt((gx ** 2 + gy ** 2) / 2.0).mean())


# ---------------------------------------------------------------------------------------
# reports and curves


@dataclass
class MetricReport:
    ssim: float
    psnr: float
    uqi: float
    sam: float
    ag: float
    ag_reference: float | None = None
    ssim_band: list[float] = field(default_factory=list)
    psnr_band: list[float] = field(default_factory=list)
    wavelengths_nm: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def identical(self) -> bool:
        return math.isinf(self.psnr)

    def to_json(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and math.isinf(v) else v
        return {
            "ssim": self.ssim, "psnr": clean(self.psnr), "identical": self.identical,
            "uqi": self.uqi, "sam": self.sam, "ag": self.ag, "ag_reference": self.ag_reference,
            "ssim_band": self.ssim_band, "psnr_band": [clean(v) for v in self.psnr_band],
            "wavelengths_nm": self.wavelengths_nm, "config": self.config,
        }


def metric_config(peak: float = 1.0) -> dict:
    return {
        "peak": peak,
        "ssim": {"window": SSIM_WINDOW, "sigma": SSIM_SIGMA, "k1": SSIM_K1, "k2": SSIM_K2,
                 "reduction": "band mean"},
        "uqi": {"block": UQI_BLOCK, "reduction": "band mean"},
        "sam": "radians, pixel mean",
        "ag": AG_FORMULA,
    }


def evaluate_pair(estimate, reference, wavelengths=None, peak: float = 1.0) -> MetricReport:
    est, ref = _pair(estimate, reference)
    sb = ssim_band(est, ref, peak)
    pb = psnr_band(est, ref, peak)
    wl = np.arange(est.shape[2], dtype=float) if wavelengths is None else np.asarray(wavelengths, float)
    return MetricReport(
        ssim=float(sb.mean()), psnr=psnr(est, ref, peak), uqi=uqi(est, ref), sam=sam(est, ref),
        ag=avg_gradient(est), ag_reference=avg_gradient(ref),
        ssim_band=[float(v) for v in sb], psnr_band=[float(v) for v in pb],
        wavelengths_nm=[float(v) for v in wl], config=metric_config(peak))


def bandwise_curves(a, b, wavelengths, peak: float = 1.0) -> list[tuple[float, float, float]]:
    """(wavelength, ssim, psnr) rows, one per band."""
    sb = ssim_band(a, b, peak)
    pb = psnr_band(a, b, peak)
    wavelengths = np.asarray(wavelengths, dtype=float)
    if wavelengths.shape != sb.shape:
        raise MetricError(f"{wavelengths.size} wavelengths for {sb.size} bands")
    return [(float(w), float(s), float(p)) for w, s, p in zip(wavelengths, sb, pb)]


def extract_spectrum(cube, x: int, y: int, wavelengths=None) -> list[tuple[float, float]]:
    """(wavelength, value) rows for column ``x``, row ``y``."""
    data = getattr(cube, "data", cube)
    wl = getattr(cube, "wavelengths_nm", wavelengths)
    data = np.asarray(data)
    h, w, nb = data.shape
    if not (0 <= x < w and 0 <= y < h):
        raise IndexError(f"pixel ({x}, {y}) outside {w}x{h} image")
    wl = np.arange(nb, dtype=float) if wl is None else np.asarray(wl, dtype=float)
    return [(float(l), float(v)) for l, v in zip(wl, data[y, x, :])]


def write_curve_csv(path, rows, header=("wavelength_nm", "ssim", "psnr")) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow(["inf" if isinstance(v, float) and math.isinf(v) else repr(v) for v in row])


def write_report_json(path, report: MetricReport | dict) -> None:
    obj = report.to_json() if isinstance(report, MetricReport) else report
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")

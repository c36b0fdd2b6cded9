"""Time-of-flight thermometry: ballistic expansion, synthetic fluorescence
images, 2-D Gaussian extraction, and the temperature fit.

sigma(t)^2 = sigma0^2 + (kB*T/m)*t^2, so the temperature fit is an exact
linear regression of sigma^2 on t^2; the iterative solver is reserved for
the image fit (damped Gauss-Newton with moment initialization).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import t as student_t

from .constants import CONSTANTS


class DegenerateImageError(ValueError):
    """Image carries no usable signal (all zeros / non-finite)."""


class GridTooSmallError(ValueError):
    """Requested pixel grid does not cover 6 sigma of the cloud."""


class FitNonConvergenceError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class NonPhysicalFitError(ValueError):
    """Temperature regression produced a negative slope."""

    def __init__(self, message, slope):
        super().__init__(message)
        self.slope = slope


@dataclass(frozen=True)
class ThermalCloud:
    atom_number: float
    temperature: float            # K
    initial_sigma: float          # m, per imaging axis
    center: tuple = (0.0, 0.0)    # m

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.initial_sigma <= 0:
            raise ValueError("initial sigma must be > 0")


@dataclass
class TofImage:
    counts: np.ndarray            # (ny, nx), >= 0
    pixel_pitch: float            # m
    exposure_time: float          # s, tag only
    expansion_time: float         # s

    def validate(self) -> None:
        if not np.all(np.isfinite(self.counts)):
            raise DegenerateImageError("image contains non-finite counts")
        if np.any(self.counts < 0):
            raise ValueError("image counts must be >= 0")


def expanded_sigma(cloud: ThermalCloud, t: float, constants=CONSTANTS) -> float:
    """Ballistic cloud width sqrt(sigma0^2 + (kB T/m) t^2) at expansion time t."""
    if t < 0:
        raise ValueError("expansion time must be >= 0")
    v2 = constants.kB * cloud.temperature / constants.m_Rb87
    return math.sqrt(cloud.initial_sigma**2 + v2 * t * t)


def _gaussian_on_grid(shape, pitch, amplitude, cx, cy, sx, sy):
    ny, nx = shape
    x = (np.arange(nx) - (nx - 1) / 2.0) * pitch
    y = (np.arange(ny) - (ny - 1) / 2.0) * pitch
    gx = np.exp(-((x - cx) ** 2) / (2.0 * sx**2))
    gy = np.exp(-((y - cy) ** 2) / (2.0 * sy**2))
    return amplitude * gy[:, None] * gx[None, :]


def render_image(
    cloud: ThermalCloud,
    t: float,
    pixel_pitch: float,
    peak_counts: float,
    seed: Optional[int] = None,
    shape: Optional[tuple] = None,
    noise: bool = True,
) -> TofImage:
    """Synthetic fluorescence image of the expanded cloud.

    Isotropic Gaussian of width sigma(t); the peak is scaled by
    (sigma0/sigma(t))^2 so integrated counts stay proportional to the atom
    number at every expansion time. Poisson shot noise per pixel,
    deterministic for a fixed seed. The grid must cover >= 6 sigma(t) per
    axis (auto-sized to 10 sigma when shape is omitted).
    """
    sigma = expanded_sigma(cloud, t)
    if shape is None:
        npix = int(math.ceil(10.0 * sigma / pixel_pitch)) | 1  # odd
        shape = (npix, npix)
    extent = (min(shape) - 1) * pixel_pitch
    if extent < 6.0 * sigma:
        raise GridTooSmallError(
            f"grid extent {extent:.3e} m covers less than 6 sigma = {6*sigma:.3e} m"
        )
    amplitude = peak_counts * (cloud.initial_sigma / sigma) ** 2
    cx, cy = cloud.center
    counts = _gaussian_on_grid(shape, pixel_pitch, amplitude, cx, cy, sigma, sigma)
    if noise:
        rng = np.random.default_rng(seed)
        counts = rng.poisson(counts).astype(float)
    img = TofImage(counts=counts, pixel_pitch=pixel_pitch,
                   exposure_time=1e-5, expansion_time=t)
    img.validate()
    return img


def image_moments(img: TofImage) -> dict:
    """Centroid and second-moment widths; the moment route is kept as an
    independent check on the iterative fit."""
    data = img.counts
    total = float(data.sum())
    if total <= 0:
        raise DegenerateImageError("image has zero integrated counts")
    ny, nx = data.shape
    x = (np.arange(nx) - (nx - 1) / 2.0) * img.pixel_pitch
    y = (np.arange(ny) - (ny - 1) / 2.0) * img.pixel_pitch
    px = data.sum(axis=0) / total
    py = data.sum(axis=1) / total
    cx = float(np.dot(px, x))
    cy = float(np.dot(py, y))
    vx = float(np.dot(px, (x - cx) ** 2))
    vy = float(np.dot(py, (y - cy) ** 2))
    return {
        "amplitude": float(data.max()),
        "center": (cx, cy),
        "sigma_x": math.sqrt(max(vx, 0.0)),
        "sigma_y": math.sqrt(max(vy, 0.0)),
        "total": total,
    }


@dataclass
class GaussianFit:
    sigma_x: float
    sigma_y: float
    center: tuple
    amplitude: float
    residual_norm: float
    iterations: int
    trace: list = field(default_factory=list)


def extract_sigma(img: TofImage, max_iter: int = 100, step_tol: float = 1e-8) -> GaussianFit:
    """2-D Gaussian least-squares fit of an image.

    Levenberg-style damped Gauss-Newton on (A, cx, cy, sx, sy) with an
    analytic Jacobian, initialized from image moments. Converges when the
    largest relative parameter step drops below step_tol; raises
    FitNonConvergenceError with the iteration trace otherwise.
    """
    img.validate()
    data = img.counts
    if float(data.max()) <= 0.0:
        raise DegenerateImageError("cannot fit an all-zero image")
    ny, nx = data.shape
    pitch = img.pixel_pitch
    x = (np.arange(nx) - (nx - 1) / 2.0) * pitch
    y = (np.arange(ny) - (ny - 1) / 2.0) * pitch
    X = np.broadcast_to(x[None, :], data.shape)
    Y = np.broadcast_to(y[:, None], data.shape)
    flat = data.ravel()

    m0 = image_moments(img)
    p = np.array([
        m0["amplitude"],
        m0["center"][0],
        m0["center"][1],
        max(m0["sigma_x"], pitch / 2.0),
        max(m0["sigma_y"], pitch / 2.0),
    ])

    def model_and_jac(params):
        a, cx, cy, sx, sy = params
        dx = X - cx
        dy = Y - cy
        ex = np.exp(-dx**2 / (2.0 * sx**2))
        ey = np.exp(-dy**2 / (2.0 * sy**2))
        g = ex * ey
        model = a * g
        jac = np.empty((flat.size, 5))
        jac[:, 0] = g.ravel()
        jac[:, 1] = (model * dx / sx**2).ravel()
        jac[:, 2] = (model * dy / sy**2).ravel()
        jac[:, 3] = (model * dx**2 / sx**3).ravel()
        jac[:, 4] = (model * dy**2 / sy**3).ravel()
        return model.ravel(), jac

    lam = 1e-3
    trace = []
    model, jac = model_and_jac(p)
    resid = model - flat
    cost = float(resid @ resid)
    scale = np.abs(p) + 1e-30
    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        jtr = jac.T @ resid
        for _ in range(20):
            damped = jtj + lam * np.diag(np.diag(jtj))
            try:
                delta = np.linalg.solve(damped, -jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_try = p + delta
            if p_try[3] <= 0 or p_try[4] <= 0 or p_try[0] <= 0:
                lam *= 10.0
                continue
            model, jac_try = model_and_jac(p_try)
            resid_try = model - flat
            cost_try = float(resid_try @ resid_try)
            if cost_try <= cost:
                p, resid, cost, jac = p_try, resid_try, cost_try, jac_try
                lam = max(lam / 3.0, 1e-12)
                break
            lam *= 10.0
        else:
            raise FitNonConvergenceError("damping failed to find a downhill step", trace)
        rel_step = float(np.max(np.abs(delta) / (np.abs(p) + 1e-30)))
        trace.append((it, cost, lam, rel_step))
        if rel_step < step_tol:
            return GaussianFit(
                sigma_x=float(p[3]),
                sigma_y=float(p[4]),
                center=(float(p[1]), float(p[2])),
                amplitude=float(p[0]),
                residual_norm=math.sqrt(cost),
                iterations=it,
                trace=trace,
            )
    raise FitNonConvergenceError(f"no convergence in {max_iter} iterations", trace)


@dataclass
class TemperatureFit:
    temperature: float            # K
    sigma0: float                 # m
    slope: float                  # m^2/s^2 (= kB T / m)
    intercept: float              # m^2
    temperature_stderr: float
    sigma0_stderr: float
    temperature_ci95: tuple
    n_samples: int


def fit_temperature(samples, constants=CONSTANTS) -> TemperatureFit:
    """Cloud temperature from (expansion time, width) pairs.

    Ordinary least squares of sigma^2 against t^2: slope = kB*T/m and
    intercept = sigma0^2. Standard errors follow from the residuals; the
    95% interval uses Student's t with n-2 dof.
    """
    pts = [(float(t), float(s)) for t, s in samples]
    if len(pts) < 3:
        raise ValueError("need at least 3 samples")
    times = np.array([p[0] for p in pts])
    sig = np.array([p[1] for p in pts])
    if len(np.unique(times)) < 2:
        raise ValueError("need at least 2 distinct expansion times")
    x = times**2
    y = sig**2
    n = len(x)
    xm = x.mean()
    ym = y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    if slope < 0:
        raise NonPhysicalFitError(
            f"fitted slope {slope:.3e} m^2/s^2 is negative", slope
        )
    resid = y - (intercept + slope * x)
    dof = max(n - 2, 1)
    s2 = float(resid @ resid) / dof
    se_slope = math.sqrt(s2 / sxx)
    se_intercept = math.sqrt(s2 * (1.0 / n + xm**2 / sxx))
    mass_over_kb = constants.m_Rb87 / constants.kB
    temp = slope * mass_over_kb
    se_temp = se_slope * mass_over_kb
    sigma0 = math.sqrt(max(intercept, 0.0))
    se_sigma0 = se_intercept / (2.0 * sigma0) if sigma0 > 0 else float("inf")
    tcrit = float(student_t.ppf(0.975, dof)) if n > 2 else float("inf")
    return TemperatureFit(
        temperature=temp,
        sigma0=sigma0,
        slope=slope,
        intercept=float(intercept),
        temperature_stderr=se_temp,
        sigma0_stderr=se_sigma0,
        temperature_ci95=(temp - tcrit * se_temp, temp + tcrit * se_temp),
        n_samples=n,
    )


def write_pgm(img: TofImage, path) -> None:
    """16-bit binary PGM (P5, big-endian), the fixture format for images."""
    data = np.clip(np.rint(img.counts), 0, 65535).astype(">u2")
    ny, nx = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path, pixel_pitch: float, expansion_time: float = 0.0) -> TofImage:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError("expected binary PGM (P5)")
        dims = fh.readline().split()
        while dims and dims[0].startswith(b"#"):
            dims = fh.readline().split()
        nx, ny = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        dtype = ">u2" if maxval > 255 else "u1"
        counts = np.frombuffer(fh.read(), dtype=dtype, count=nx * ny)
    img = TofImage(
        counts=counts.reshape(ny, nx).astype(float),
        pixel_pitch=pixel_pitch,
        exposure_time=0.0,
        expansion_time=expansion_time,
    )
    img.validate()
    return img

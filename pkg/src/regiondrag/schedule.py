"""Noise schedule, the one-step latent transition, and handle-noise blending.

The transition implements the standard variance-preserving update

    z_t = sqrt(abar_t) * (z_s - sqrt(1 - abar_s) * eps) / sqrt(abar_s)
          + sqrt(1 - abar_t - sigma^2) * eps + sigma * w

and runs in both directions: s > t denoises, s < t adds noise (inversion).
sigma scales with eta; eta = 0 makes every step deterministic and exactly
invertible for a fixed eps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import EditConfig, LatentGrid, RegionDragError, ValidationError
from .rng import CounterRng


class ScheduleError(RegionDragError, ValueError):
    """Schedule inconsistency: a step pair admits no valid noise split."""


def sd_scaled_linear_alpha_bar(total_steps: int = 1000,
                               beta_start: float = 0.00085,
                               beta_end: float = 0.012) -> np.ndarray:
    """Cumulative signal fractions of the scaled-linear beta schedule
    (the SD-1.5 convention); index 0 is the clean boundary abar_0 = 1."""
    betas = np.linspace(beta_start ** 0.5, beta_end ** 0.5, total_steps) ** 2
    abar = np.cumprod(1.0 - betas)
    return np.concatenate(([1.0], abar))


def linear_alpha_bar(total_steps: int = 1000, floor: float = 0.01) -> np.ndarray:
    """Toy straight-line schedule from 1 down to ``floor``; handy in tests."""
    return np.linspace(1.0, floor, total_steps + 1)


_FAMILIES = {
    "sd-scaled-linear": sd_scaled_linear_alpha_bar,
    "linear": linear_alpha_bar,
}


@dataclass(frozen=True)
class NoiseSchedule:
    """abar_t over t in [0, T_max] plus the stochasticity weight eta."""

    alpha_bar: np.ndarray
    eta: float = 1.0
    family: str = "sd-scaled-linear"

    def __post_init__(self):
        abar = np.asarray(self.alpha_bar, dtype=np.float64)
        if abar.ndim != 1 or len(abar) < 2:
            raise ValidationError("alpha_bar must be a 1-d sequence over [0, T_max]")
        if abar[0] != 1.0:
            raise ValidationError("alpha_bar[0] must be exactly 1 (clean boundary)")
        if np.any(np.diff(abar) >= 0):
            raise ValidationError("alpha_bar must be strictly decreasing")
        if abar[-1] <= 0.0 or np.any(abar > 1.0):
            raise ValidationError("alpha_bar values must lie in (0, 1]")
        if self.eta < 0.0:
            raise ValidationError(f"eta must be >= 0, got {self.eta}")
        abar.flags.writeable = False
        object.__setattr__(self, "alpha_bar", abar)

    @staticmethod
    def create(family: str = "sd-scaled-linear", total_steps: int = 1000,
               eta: float = 1.0) -> "NoiseSchedule":
        if family not in _FAMILIES:
            raise ValidationError(f"unknown schedule family {family!r}; known: {sorted(_FAMILIES)}")
        return NoiseSchedule(_FAMILIES[family](total_steps), eta=eta, family=family)

    @property
    def t_max(self) -> int:
        return len(self.alpha_bar) - 1

    def _check_step(self, t: int) -> int:
        t = int(t)
        if not 0 <= t <= self.t_max:
            raise ValidationError(f"timestep {t} outside [0, {self.t_max}]")
        return t

    def sigma(self, s: int, t: int) -> float:
        """Fresh-noise scale for the step s -> t.

        Denoising steps (s > t) use the ancestral-sampling variance; noising
        steps (s < t) use the mirrored expression, which vanishes when
        starting from the clean boundary.  Zero whenever eta is zero or the
        step is trivial.
        """
        s, t = self._check_step(s), self._check_step(t)
        if self.eta == 0.0 or s == t:
            return 0.0
        a_s, a_t = self.alpha_bar[s], self.alpha_bar[t]
        if s > t:
            return self.eta * np.sqrt((1 - a_t) / (1 - a_s)) * np.sqrt(1 - a_s / a_t)
        if a_s == 1.0:
            return 0.0
        return self.eta * np.sqrt((1 - a_s) / (1 - a_t)) * np.sqrt(1 - a_t / a_s)


def transition(z_s: LatentGrid, s: int, t: int, eps: np.ndarray,
               schedule: NoiseSchedule, rng: CounterRng | None = None,
               noise_purpose: str = "transition") -> LatentGrid:
    """One scheduler step from timestep s to timestep t given predicted noise.

    The injected Gaussian w is drawn from ``rng`` addressed by
    (noise_purpose, s) whenever sigma > 0.
    """
    if z_s.timestep != s:
        raise ValidationError(f"latent is tagged t={z_s.timestep}, transition expects s={s}")
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != z_s.data.shape:
        raise ValidationError(f"eps shape {eps.shape} != latent shape {z_s.data.shape}")
    s = schedule._check_step(s)
    t = schedule._check_step(t)
    if s == t:
        return z_s.with_data(z_s.data.copy())

    a_s = schedule.alpha_bar[s]
    a_t = schedule.alpha_bar[t]
    sigma = schedule.sigma(s, t)
    resid = 1.0 - a_t - sigma * sigma
    if resid < -1e-12:
        raise ScheduleError(
            f"step {s}->{t}: sigma^2={sigma*sigma:.6f} exceeds 1 - abar_t={1 - a_t:.6f}"
        )
    resid = max(resid, 0.0)

    x0_hat = (z_s.data - np.sqrt(1.0 - a_s) * eps) / np.sqrt(a_s)
    out = np.sqrt(a_t) * x0_hat + np.sqrt(resid) * eps
    if sigma > 0.0:
        if rng is None:
            raise ValidationError("stochastic step needs an rng (sigma > 0)")
        out = out + sigma * rng.normal(noise_purpose, s, z_s.data.shape)
    return LatentGrid(out, timestep=t)


def blend_handle(z: LatentGrid, handle_mask: np.ndarray, alpha: float,
                 rng: CounterRng, noise_purpose: str = "blend") -> LatentGrid:
    """Resample the masked area toward fresh Gaussian noise.

    Inside the mask the latent becomes sqrt(1 - alpha^2) * z + alpha * eps,
    which preserves variance for unit-variance content; outside the mask the
    latent is untouched.  alpha = 0 returns the input bit-identically.
    """
    mask = np.asarray(handle_mask, dtype=bool)
    if mask.shape != z.data.shape[1:]:
        raise ValidationError(f"mask shape {mask.shape} != latent spatial dims {z.data.shape[1:]}")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 0.0 or not mask.any():
        return z.with_data(z.data.copy())
    eps = rng.normal(noise_purpose, z.timestep, z.data.shape)
    out = z.data.copy()
    out[:, mask] = np.sqrt(1.0 - alpha * alpha) * z.data[:, mask] + alpha * eps[:, mask]
    return z.with_data(out)


@dataclass(frozen=True)
class SamplerGrid:
    """Uniformly spaced sampler timesteps plus the resolved positions of the
    inversion depth and the copy-paste stop."""

    timesteps: tuple[int, ...]
    invert_to: int
    cp_stop: int

    def __post_init__(self):
        ts = tuple(int(t) for t in self.timesteps)
        if len(ts) < 1 or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError("grid timesteps must be strictly increasing")
        if self.invert_to not in ts:
            raise ValidationError("invert_to must be a grid timestep")
        if self.cp_stop not in ts:
            raise ValidationError("cp_stop must be a grid timestep")
        if self.cp_stop > self.invert_to:
            raise ValidationError("cp_stop must not exceed invert_to")
        object.__setattr__(self, "timesteps", ts)

    def inversion_path(self) -> list[tuple[int, int]]:
        """(s, t) hops from the clean boundary up to the inversion depth."""
        stops = [0] + [t for t in self.timesteps if t <= self.invert_to]
        return list(zip(stops[:-1], stops[1:]))

    def denoising_path(self) -> list[tuple[int, int]]:
        """(s, t) hops from the inversion depth back down to 0."""
        stops = [t for t in self.timesteps if t <= self.invert_to][::-1] + [0]
        return list(zip(stops[:-1], stops[1:]))


def build_sampler_grid(cfg: EditConfig) -> SamplerGrid:
    """Spread ``sampler_steps`` timesteps uniformly over (0, T_max] and round
    the configured invert_to / cp_stop onto grid points.

    If the grid is too coarse to separate the two, cp_stop is pulled one grid
    step below invert_to (with a warning) when a lower step exists.
    """
    t_max = cfg.total_trained_steps
    n = cfg.sampler_steps
    grid = [round(t_max * (i + 1) / n) for i in range(n)]
    grid = sorted(set(int(t) for t in grid))
    arr = np.array(grid)

    invert_to = int(arr[np.argmin(np.abs(arr - cfg.invert_to))])
    cp_stop = int(arr[np.argmin(np.abs(arr - cfg.cp_stop))])
    if invert_to != cfg.invert_to:
        warnings.warn(
            f"invert_to={cfg.invert_to} is off the {n}-step grid; using {invert_to}",
            stacklevel=2,
        )
    if cp_stop >= invert_to and cfg.cp_stop != cfg.invert_to:
        below = arr[arr < invert_to]
        if len(below):
            warnings.warn(
                f"grid too coarse to separate cp_stop from invert_to; "
                f"clamping cp_stop to {int(below[-1])}",
                stacklevel=2,
            )
            cp_stop = int(below[-1])
        else:
            warnings.warn(
                "grid has no step below invert_to; copy-paste degenerates to the initial step",
                stacklevel=2,
            )
            cp_stop = invert_to
    elif cp_stop != cfg.cp_stop:
        warnings.warn(
            f"cp_stop={cfg.cp_stop} is off the {n}-step grid; using {cp_stop}",
            stacklevel=2,
        )
    return SamplerGrid(timesteps=tuple(grid), invert_to=invert_to, cp_stop=cp_stop)


def schedule_table(schedule: NoiseSchedule, grid: SamplerGrid) -> list[dict]:
    """Per-grid-step dump of (t, abar_t, sigma of the denoising hop landing at
    the next lower grid step); used by golden-file tests and the CLI."""
    rows = []
    stops = list(grid.timesteps)
    lower = {t: (stops[i - 1] if i else 0) for i, t in enumerate(stops)}
    for t in stops:
        rows.append({
            "t": t,
            "alpha_bar": float(schedule.alpha_bar[t]),
            "sigma_down": float(schedule.sigma(t, lower[t])),
        })
    return rows

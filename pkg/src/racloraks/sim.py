"""Synthetic dual-polarity multi-channel EPI data.

A :class:`Scene` holds the image-space model (magnitude, phase, coil maps,
interpolarity modulation). Corruptions act on scenes and
:meth:`Scene.render` turns a scene into positive/negative k-space grids.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .kspace import Dataset, KSpaceGrid, Polarity, SamplingPattern, fft2c
from .subspace import ParameterError

CORRUPTION_KINDS = ("none", "hyperintensity", "inverted_contrast", "shot_ghost")


@dataclass(frozen=True)
class PhantomSpec:
    ny: int = 32
    nx: int = 32
    n_ch: int = 8
    support_fraction: float = 0.7
    seed: int = 0
    phase_poly_degree: int = 2

    def __post_init__(self):
        if self.ny < 4 or self.nx < 4:
            raise ParameterError(f"phantom grid must be at least 4x4, got {self.ny}x{self.nx}")
        if self.n_ch < 1:
            raise ParameterError(f"n_ch must be >= 1, got {self.n_ch}")
        if not 0 < self.support_fraction <= 1:
            raise ParameterError(f"support_fraction must lie in (0, 1], got {self.support_fraction}")
        if self.phase_poly_degree < 0:
            raise ParameterError(f"phase_poly_degree must be >= 0, got {self.phase_poly_degree}")


@dataclass(frozen=True)
class PolarityModel:
    """Image-space modulation of the negative-polarity image.

    ``phi0`` is a constant phase, ``g`` a linear phase ramp in radians per
    pixel along (y, x), ``nonlinear_amp`` the peak magnitude of a fixed
    quadratic phase pattern and ``scale`` the magnitude ratio.
    """

    phi0: float = 0.0
    g: tuple = (0.0, 0.0)
    nonlinear_amp: float = 0.0
    scale: float = 1.0

    def phase_map(self, ny, nx) -> np.ndarray:
        y, x = _pixel_coords(ny, nx)
        phase = self.phi0 + self.g[0] * y + self.g[1] * x
        if self.nonlinear_amp:
            u, v = y / (ny / 2), x / (nx / 2)
            q = u**2 - 0.6 * v**2 + 0.8 * u * v + 0.3 * v
            phase = phase + self.nonlinear_amp * q / np.max(np.abs(q))
        return np.broadcast_to(phase, (ny, nx)).astype(float)

    def modulation(self, ny, nx) -> np.ndarray:
        if self.phi0 == 0 and self.g[0] == 0 and self.g[1] == 0 and self.nonlinear_amp == 0:
            return np.full((ny, nx), self.scale, dtype=np.complex128)
        return self.scale * np.exp(1j * self.phase_map(ny, nx))


# default used by the scenarios; the quadratic term is what makes the
# correction hard for linear-phase methods
SCENARIO_POLARITY = PolarityModel(phi0=0.4, g=(0.02, 0.08), nonlinear_amp=0.9, scale=1.0)


@dataclass(frozen=True)
class CorruptionSpec:
    """Scene perturbation.

    ``center`` and ``width`` are fractions of the FOV measured from the image
    centre, ``amplitude`` is relative to the peak magnitude.
    ``reference_max`` pins the inversion level of ``inverted_contrast``.
    """

    kind: str = "none"
    where: str = "epi"
    center: tuple = (0.25, -0.2)
    width: float = 0.08
    amplitude: float = 1.0
    ghost_phase: float = 0.0
    reference_max: float = None

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ParameterError(f"corruption kind must be one of {CORRUPTION_KINDS}, got {self.kind!r}")
        if self.where not in ("epi", "acs"):
            raise ParameterError(f"corruption target must be 'epi' or 'acs', got {self.where!r}")
        if not self.width > 0:
            raise ParameterError(f"blob width must be > 0, got {self.width}")
        if any(abs(c) > 0.5 for c in self.center):
            raise ParameterError(f"blob centre {self.center} lies outside the FOV")


def _pixel_coords(ny, nx):
    y = (np.arange(ny) - ny // 2)[:, None].astype(float)
    x = (np.arange(nx) - nx // 2)[None, :].astype(float)
    return y, x


def _smooth_ellipse(ny, nx, cy, cx, ay, ax, theta, edge=0.15):
    y, x = _pixel_coords(ny, nx)
    y, x = y / (ny / 2), x / (nx / 2)
    c, s = np.cos(theta), np.sin(theta)
    yr = c * (y - cy) + s * (x - cx)
    xr = -s * (y - cy) + c * (x - cx)
    d = np.sqrt((yr / ay) ** 2 + (xr / ax) ** 2)
    t = np.clip((1 - d) / edge, 0, 1)
    return t * t * (3 - 2 * t)


@dataclass(frozen=True, eq=False)
class Scene:
    magnitude: np.ndarray
    phase: np.ndarray
    coils: np.ndarray
    support: np.ndarray
    polarity: PolarityModel = PolarityModel()
    ghost_phase: float = 0.0

    @property
    def shape(self):
        return self.coils.shape

    def images(self):
        """Coil images for the positive and negative polarity."""
        base = self.coils * (self.magnitude * np.exp(1j * self.phase))[None]
        n_ch, ny, nx = self.coils.shape
        return base, base * self.polarity.modulation(ny, nx)[None]

    def render(self):
        pos, neg = self.images()
        kp, kn = fft2c(pos), fft2c(neg)
        if self.ghost_phase:
            f = np.exp(1j * self.ghost_phase)
            kp[:, 1::2] *= f
            kn[:, 1::2] *= f
        return KSpaceGrid(kp, Polarity.POSITIVE), KSpaceGrid(kn, Polarity.NEGATIVE)


def coil_maps(n_ch, ny, nx, rng) -> np.ndarray:
    """Gaussian-magnitude coil maps spread around the FOV with linear phase."""
    if n_ch == 1:
        return np.ones((1, ny, nx), dtype=np.complex128)
    y, x = _pixel_coords(ny, nx)
    u, v = y / (ny / 2), x / (nx / 2)
    maps = np.empty((n_ch, ny, nx), dtype=np.complex128)
    for c in range(n_ch):
        ang = 2 * np.pi * c / n_ch + rng.uniform(-0.2, 0.2)
        cy, cx = 0.9 * np.sin(ang), 0.9 * np.cos(ang)
        mag = np.exp(-((u - cy) ** 2 + (v - cx) ** 2) / (2 * 0.6**2))
        a, b, d = rng.uniform(-np.pi, np.pi), rng.uniform(-1, 1), rng.uniform(-1, 1)
        maps[c] = mag * np.exp(1j * (a + b * u + d * v))
    return maps


def make_scene(spec: PhantomSpec = PhantomSpec(), pol: PolarityModel = PolarityModel()) -> Scene:
    """Piecewise-smooth ellipse phantom with smooth phase and coil maps."""
    rng = np.random.default_rng(spec.seed)
    ny, nx = spec.ny, spec.nx
    half = spec.support_fraction
    head = _smooth_ellipse(ny, nx, 0, 0, 0.92 * half, 0.78 * half, 0.0)
    mag = 0.6 * head
    for _ in range(int(rng.integers(2, 8))):
        ay, ax = rng.uniform(0.15, 0.4) * half, rng.uniform(0.1, 0.35) * half
        cy, cx = rng.uniform(-0.4, 0.4) * half, rng.uniform(-0.35, 0.35) * half
        mag = mag + rng.uniform(-0.3, 0.5) * _smooth_ellipse(ny, nx, cy, cx, ay, ax, rng.uniform(0, np.pi))
    mag = np.clip(mag, 0, None) * (head > 0)
    support = head > 0
    y, x = _pixel_coords(ny, nx)
    u, v = y / (ny / 2), x / (nx / 2)
    phase = np.zeros((ny, nx))
    for i in range(spec.phase_poly_degree + 1):
        for j in range(spec.phase_poly_degree + 1 - i):
            phase = phase + rng.uniform(-0.8, 0.8) * u**i * v**j
    coils = coil_maps(spec.n_ch, ny, nx, rng)
    return Scene(magnitude=mag, phase=phase, coils=coils, support=support, polarity=pol)


def make_gold(spec: PhantomSpec = PhantomSpec(), pol: PolarityModel = PolarityModel()):
    """Fully sampled positive/negative k-space of a synthetic phantom."""
    return make_scene(spec, pol).render()


def gaussian_blob(ny, nx, center, width) -> np.ndarray:
    y, x = _pixel_coords(ny, nx)
    u, v = y / ny, x / nx
    return np.exp(-((u - center[0]) ** 2 + (v - center[1]) ** 2) / (2 * width**2))


def corrupt(scene: Scene, c: CorruptionSpec) -> Scene:
    """Apply an image-space or line-wise perturbation to a scene."""
    if c.kind == "none":
        return scene
    ny, nx = scene.magnitude.shape
    if c.kind == "hyperintensity":
        if c.amplitude == 0:
            return scene
        peak = float(np.max(scene.magnitude))
        blob = c.amplitude * peak * gaussian_blob(ny, nx, c.center, c.width)
        return replace(scene, magnitude=scene.magnitude + blob)
    if c.kind == "inverted_contrast":
        m = scene.magnitude
        top = float(np.max(m[scene.support])) if c.reference_max is None else float(c.reference_max)
        return replace(scene, magnitude=np.where(scene.support, top - m, m))
    if c.kind == "shot_ghost":
        return replace(scene, ghost_phase=scene.ghost_phase + c.ghost_phase)
    raise ParameterError(f"unknown corruption kind {c.kind!r}")


def hyperintensity_delta(scene: Scene, c: CorruptionSpec):
    """K-space of the added blob alone, for both polarities."""
    pos, neg = corrupt(scene, c).images()
    p0, n0 = scene.images()
    return fft2c(pos - p0), fft2c(neg - n0), pos - p0, neg - n0


def to_single_channel(grids, weights):
    """Collapse channels with a fixed complex linear combination."""
    w = np.asarray(weights, dtype=np.complex128)
    out = []
    for g in grids:
        if w.shape != (g.n_ch,):
            raise ParameterError(f"weights must have length {g.n_ch}, got {w.shape}")
        if not np.any(w):
            raise ParameterError("weights must not all be zero")
        out.append(KSpaceGrid(np.tensordot(w, g.data, axes=1)[None], g.polarity))
    return tuple(out)


def sample_epi(gold_pos: KSpaceGrid, gold_neg: KSpaceGrid, R: int = 1, pf=Fraction(1), offset: int = 0):
    """Keep the lines each polarity would acquire; returns ``(epi_pos, epi_neg, pattern)``."""
    if gold_pos.shape != gold_neg.shape:
        raise ParameterError(f"gold grids differ in shape: {gold_pos.shape} vs {gold_neg.shape}")
    pattern = SamplingPattern(ny=gold_pos.ny, R=R, pf=pf, offset=offset)
    out = []
    for g, pol in ((gold_pos, Polarity.POSITIVE), (gold_neg, Polarity.NEGATIVE)):
        m = pattern.mask(pol, g.nx)[None]
        out.append(KSpaceGrid(np.where(m, g.data, 0), pol))
    return out[0], out[1], pattern


SCENARIOS = {
    "matched": CorruptionSpec(kind="none"),
    "hyperintensity": CorruptionSpec(kind="hyperintensity", where="epi"),
    "hyperintensity-acs": CorruptionSpec(kind="hyperintensity", where="acs"),
    "inverted-contrast": CorruptionSpec(kind="inverted_contrast", where="acs"),
    "shot-ghost": CorruptionSpec(kind="shot_ghost", where="acs", ghost_phase=0.3),
    "single-channel": CorruptionSpec(kind="hyperintensity", where="epi"),
}


def _add_noise(gold, acs, level, seed):
    # separate stream so the phantom itself does not depend on the noise level
    rng = np.random.default_rng([seed, 0x6E6F697365])
    ref = np.sqrt(np.mean([np.mean(np.abs(g.data) ** 2) for g in gold]))
    sigma = level * ref / np.sqrt(2)

    def draw(g):
        w = rng.standard_normal((2,) + g.data.shape)
        return KSpaceGrid(g.data + sigma * (w[0] + 1j * w[1]), g.polarity)

    gold = tuple(draw(g) for g in gold)
    acs = tuple(draw(g) for g in acs)
    return gold, acs


def build_dataset(
    scenario: str = "matched",
    R: int = 2,
    pf=Fraction(1),
    offset: int = 0,
    seed: int = 0,
    n_ch: int = 8,
    ny: int = 32,
    nx: int = 32,
    polarity: PolarityModel = SCENARIO_POLARITY,
    acs_pf=Fraction(1),
    single_channel_weights=None,
    noise: float = 1e-3,
):
    """Simulate a complete dataset for a named scenario.

    ``noise`` is the standard deviation of complex white Gaussian noise
    relative to the RMS of the noise-free gold k-space. Gold (and therefore
    the EPI samples drawn from it) and ACS receive independent draws.

    Returns ``(dataset, manifest)`` where ``manifest`` lists every parameter.
    """
    if not noise >= 0:
        raise ParameterError(f"noise must be >= 0, got {noise}")
    if scenario not in SCENARIOS:
        raise ParameterError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}")
    c = SCENARIOS[scenario]
    spec = PhantomSpec(ny=ny, nx=nx, n_ch=n_ch, seed=seed)
    base = make_scene(spec, polarity)
    epi_scene = corrupt(base, c) if c.where == "epi" else base
    acs_scene = corrupt(base, c) if c.where == "acs" else base
    gold = epi_scene.render()
    acs = acs_scene.render()
    weights = None
    if scenario == "single-channel":
        weights = single_channel_weights
        if weights is None:
            weights = np.ones(n_ch) / np.sqrt(n_ch)
        gold = to_single_channel(gold, weights)
        acs = to_single_channel(acs, weights)
    if noise > 0:
        gold, acs = _add_noise(gold, acs, noise, seed)
    epi_pos, epi_neg, pattern = sample_epi(*gold, R=R, pf=pf, offset=offset)
    acs_pattern = SamplingPattern(ny=ny, R=1, pf=acs_pf)
    if acs_pattern.pf != 1:
        m = acs_pattern.acquired_mask(nx)[None]
        acs = tuple(KSpaceGrid(np.where(m, g.data, 0), g.polarity) for g in acs)
    ds = Dataset(epi=(epi_pos, epi_neg), pattern=pattern, acs=acs, acs_pattern=acs_pattern, gold=gold)
    manifest = {
        "scenario": scenario,
        "seed": seed,
        "R": R,
        "pf": str(Fraction(pf)),
        "offset": offset,
        "phantom": {
            "ny": ny, "nx": nx, "n_ch": n_ch,
            "support_fraction": spec.support_fraction, "phase_poly_degree": spec.phase_poly_degree,
        },
        "polarity": {
            "phi0": polarity.phi0, "g": list(polarity.g),
            "nonlinear_amp": polarity.nonlinear_amp, "scale": polarity.scale,
        },
        "corruption": {
            "kind": c.kind, "where": c.where, "center": list(c.center), "width": c.width,
            "amplitude": c.amplitude, "ghost_phase": c.ghost_phase,
        },
        "acs_pf": str(Fraction(acs_pf)),
        "noise": noise,
        "single_channel_weights": None if weights is None else [[float(w.real), float(w.imag)] for w in np.asarray(weights, dtype=complex)],
    }
    return ds, manifest

"""Procedural band-limited textures.

A texture is a closed-form function of continuous image coordinates, so the
scene renderer can evaluate it exactly at warped sample points instead of
resampling a raster.  Built as a sum of 2-D sinusoids: a couple of
low-frequency "gradient" waves plus mid-frequency colored noise, with the
amplitude budget sized so values stay inside [0, 1] without clipping.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["SinusoidTexture"]


@dataclass(frozen=True)
class SinusoidTexture:
    """base[c] + sum_k amp[k, c] * sin(2*pi * freq[k] . p + phase[k])."""

    base: np.ndarray  # (C,)
    freq: np.ndarray  # (K, 2), cycles per pixel
    phase: np.ndarray  # (K,)
    amp: np.ndarray  # (K, C)

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=np.float64))
        object.__setattr__(self, "freq", np.asarray(self.freq, dtype=np.float64).reshape(-1, 2))
        object.__setattr__(self, "phase", np.asarray(self.phase, dtype=np.float64))
        object.__setattr__(self, "amp", np.asarray(self.amp, dtype=np.float64))

    @property
    def channels(self):
        return len(self.base)

    @property
    def is_flat(self):
        return len(self.freq) == 0 or not self.amp.any()

    def eval(self, pts):
        """Colors in [0, 1] at continuous (x, y) points; shape (..., C)."""
        pts = np.asarray(pts, dtype=np.float64)
        out = np.broadcast_to(self.base, pts.shape[:-1] + (self.channels,)).copy()
        if len(self.freq):
            waves = np.sin(2 * np.pi * (pts @ self.freq.T) + self.phase)
            out += waves @ self.amp
        return out

    @staticmethod
    def flat(color):
        """Homogeneous texture: constant color, zero image gradient."""
        color = np.atleast_1d(np.asarray(color, dtype=np.float64))
        return SinusoidTexture(color, np.zeros((0, 2)), np.zeros(0), np.zeros((0, len(color))))

    @staticmethod
    def random(rng, channels=3, n_waves=6, freq_range=(0.02, 0.10), contrast=0.35):
        """Draw a texture with ``n_waves`` noise waves plus two slow gradient
        waves, total amplitude exactly ``contrast`` per channel.

        freq_range is in cycles per pixel; keep the upper end well below
        Nyquist so bilinear interpolation of the rendered images stays
        accurate.  Amplitudes are tilted toward low frequencies
        (roughly 1/sqrt(f), a crude natural-image spectrum): photometric
        matching needs the coarse structure to dominate, a flat spectrum
        leaves gradient-based alignment without a usable basin.
        """
        k = n_waves + 2
        mag = np.empty(k)
        mag[:2] = rng.uniform(0.002, 0.008, size=2)  # gradients, period >= 125 px
        mag[2:] = rng.uniform(freq_range[0], freq_range[1], size=n_waves)
        theta = rng.uniform(0, 2 * np.pi, size=k)
        freq = mag[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        phase = rng.uniform(0, 2 * np.pi, size=k)
        amp = rng.uniform(0.2, 1.0, size=(k, channels)) / np.sqrt(mag)[:, None]
        amp *= contrast / amp.sum(0, keepdims=True)
        # keep base + sum(|amp|) inside [0.02, 0.98]
        lo = 0.02 + contrast
        base = rng.uniform(lo, 1.0 - lo, size=channels)
        return SinusoidTexture(base, freq, phase, amp)

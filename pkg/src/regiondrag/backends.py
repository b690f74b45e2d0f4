"""Noise-prediction backends.

A backend maps (latent, timestep, conditioning) to a noise grid and exposes
its self-attention keys/values for capture and injection.  The built-in toy
backend is a small untrained conv + windowed-self-attention stack with a
fixed random seed: deterministic, bounded, and cheap.  It exists to exercise
the trajectory math and the KV-swap mechanism, not to produce good images.
Zero and constant backends support analytic round-trip tests.  Real diffusion
models attach through the same interface.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.random import Generator, Philox

from .core import LatentGrid, RegionDragError, ValidationError


class BackendError(RegionDragError, RuntimeError):
    """Backend unavailable or fed geometry it cannot accept."""


@dataclass(frozen=True)
class Conditioning:
    """Prompt text plus its backend-defined embedding vector."""

    prompt: str
    embedding: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embedding, dtype=np.float64).ravel()
        emb.flags.writeable = False
        object.__setattr__(self, "embedding", emb)


@dataclass(frozen=True)
class DenoiserOutput:
    eps: np.ndarray
    captured_kv: dict | None = None


class AttentionCache:
    """Per (timestep, layer id) key/value matrices, token-major."""

    def __init__(self):
        self._store: dict[tuple[int, str], tuple[np.ndarray, np.ndarray]] = {}

    def put_fragment(self, timestep: int, fragment: dict) -> None:
        for layer, (k, v) in fragment.items():
            if k.shape[0] != v.shape[0]:
                raise ValidationError(
                    f"kv fragment for layer {layer!r} has mismatched token counts "
                    f"{k.shape[0]} vs {v.shape[0]}"
                )
            self._store[(int(timestep), str(layer))] = (k, v)

    def fragment_at(self, timestep: int) -> dict:
        return {
            layer: kv for (t, layer), kv in self._store.items() if t == int(timestep)
        }

    def timesteps(self) -> list[int]:
        return sorted({t for (t, _) in self._store})

    def size_report(self) -> list[dict]:
        return [
            {"t": t, "layer": layer, "tokens": int(k.shape[0]),
             "dim": int(k.shape[1]) if k.ndim > 1 else 1}
            for (t, layer), (k, v) in sorted(self._store.items())
        ]

    def __len__(self) -> int:
        return len(self._store)


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def _weight_generator(seed: int, tag: str) -> Generator:
    digest = hashlib.blake2b(f"toy:{seed}:{tag}".encode(), digest_size=16).digest()
    return Generator(Philox(key=int.from_bytes(digest, "little")))


def _sinusoidal(t: int, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = t * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])


def prompt_embedding(prompt: str, dim: int = 16) -> np.ndarray:
    """Deterministic pseudo-embedding: the prompt hash seeds a Gaussian draw."""
    digest = hashlib.sha256(prompt.encode()).digest()[:16]
    gen = Generator(Philox(key=int.from_bytes(digest, "little")))
    return gen.standard_normal(dim)


class _ToyParams:
    """Per-channel-count weights of the toy stack, drawn from a fixed seed.

    Kept in float32: the stack is untrained, so single precision only needs
    to be deterministic, and it halves the cost of the attention hot path.
    """

    def __init__(self, channels: int, features: int, embed_dim: int, seed: int):
        gen = _weight_generator(seed, f"c{channels}")

        def draw(shape, fan_in):
            return (gen.standard_normal(shape) / np.sqrt(fan_in)).astype(np.float32)

        self.w_in = draw((features, channels, 3, 3), channels * 9)
        self.b_in = np.zeros(features, dtype=np.float32)
        self.w_time = draw((features, embed_dim), embed_dim)
        self.w_prompt = draw((features, embed_dim), embed_dim)
        self.w_q = draw((features, features), features)
        self.w_k = draw((features, features), features)
        self.w_v = draw((features, features), features)
        self.w_o = draw((features, features), features)
        self.w_out = draw((channels, features, 3, 3), features * 9)
        self.b_out = np.zeros(channels, dtype=np.float32)


def _conv3x3(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 convolution, (C_in, H, W) -> (C_out, H, W)."""
    c_in, h, w = x.shape
    padded = np.zeros((c_in, h + 2, w + 2), dtype=x.dtype)
    padded[:, 1:-1, 1:-1] = x
    # (H, W, C_in, 3, 3) patches, flattened for one matmul
    patches = sliding_window_view(padded, (3, 3), axis=(1, 2))
    cols = np.ascontiguousarray(patches.transpose(1, 2, 0, 3, 4)).reshape(h * w, c_in * 9)
    out = cols @ weight.reshape(weight.shape[0], c_in * 9).T + bias
    return out.T.reshape(weight.shape[0], h, w)


class ToyDenoiser:
    """Untrained single-attention-block denoiser with capturable K/V.

    Self-attention runs over all height x width tokens; scores are computed
    within square windows to keep desk-scale latents fast.  Keys and values
    are full token-major matrices, so capture/injection is exact regardless
    of windowing.
    """

    name = "toy"
    concurrent_safe = True
    LAYERS = ("attn0",)

    def __init__(self, seed: int = 0, features: int = 16, heads: int = 4,
                 window: int = 8, embed_dim: int = 16, out_scale: float = 1.0):
        if features % heads != 0:
            raise ValidationError("features must divide evenly into heads")
        self.seed = int(seed)
        self.features = features
        self.heads = heads
        self.window = window
        self.embed_dim = embed_dim
        self.out_scale = out_scale
        self._params: dict[int, _ToyParams] = {}
        self._windows: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def conditioning(self, prompt: str) -> Conditioning:
        return Conditioning(prompt=prompt, embedding=prompt_embedding(prompt, self.embed_dim))

    def _params_for(self, channels: int) -> _ToyParams:
        if channels not in self._params:
            self._params[channels] = _ToyParams(channels, self.features, self.embed_dim, self.seed)
        return self._params[channels]

    def _window_index(self, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
        """Token indices grouped into square windows, padded to equal length.

        Returns (index, valid): index is (windows, slots) with -1 padding,
        valid marks real slots.  Cached per latent shape.
        """
        key = (h, w)
        if key not in self._windows:
            grid = np.arange(h * w).reshape(h, w)
            blocks = [
                grid[y0:y0 + self.window, x0:x0 + self.window].ravel()
                for y0 in range(0, h, self.window)
                for x0 in range(0, w, self.window)
            ]
            slots = max(len(b) for b in blocks)
            index = np.full((len(blocks), slots), -1, dtype=np.int64)
            for i, b in enumerate(blocks):
                index[i, :len(b)] = b
            self._windows[key] = (index, index >= 0)
        return self._windows[key]

    def _attention(self, tokens: np.ndarray, p: _ToyParams, h: int, w: int,
                   kv_override: dict | None, capture_kv: bool):
        q = tokens @ p.w_q.T
        k = tokens @ p.w_k.T
        v = tokens @ p.w_v.T
        captured = {"attn0": (k, v)} if capture_kv else None
        if kv_override is not None:
            extra = set(kv_override) - set(self.LAYERS)
            if extra:
                raise BackendError(f"kv override names unknown layers {sorted(extra)}")
            if "attn0" in kv_override:
                k_over, v_over = kv_override["attn0"]
                k_over = np.asarray(k_over, dtype=np.float32)
                v_over = np.asarray(v_over, dtype=np.float32)
                if k_over.shape != k.shape or v_over.shape != v.shape:
                    raise BackendError(
                        f"kv override shape {k_over.shape}/{v_over.shape} does not match "
                        f"layer geometry {k.shape}"
                    )
                k, v = k_over, v_over

        n, f = tokens.shape
        hd = f // self.heads
        index, valid = self._window_index(h, w)
        nwin, slots = index.shape
        gather = np.maximum(index, 0)

        def to_batches(m: np.ndarray) -> np.ndarray:
            # (N, F) -> (windows * heads, slots, head_dim), matmul-friendly
            g = m.reshape(n, self.heads, hd)[gather]
            return np.ascontiguousarray(g.transpose(0, 2, 1, 3)).reshape(
                nwin * self.heads, slots, hd
            )

        qb, kb, vb = to_batches(q), to_batches(k), to_batches(v)
        logits = qb @ kb.transpose(0, 2, 1)
        logits *= np.float32(1.0 / np.sqrt(hd))
        if not valid.all():
            pad = ~np.repeat(valid, self.heads, axis=0)[:, None, :]
            logits[np.broadcast_to(pad, logits.shape)] = -np.inf
        logits -= logits.max(axis=2, keepdims=True)
        att = np.exp(logits, out=logits)
        att /= att.sum(axis=2, keepdims=True)
        out_b = att @ vb  # (windows * heads, slots, head_dim)

        out_w = out_b.reshape(nwin, self.heads, slots, hd).transpose(0, 2, 1, 3)
        out = np.empty((n, f), dtype=np.float32)
        out[index[valid]] = out_w.reshape(nwin, slots, f)[valid]
        return out @ p.w_o.T, captured

    def predict_noise(self, z: LatentGrid, t: int, cond: Conditioning,
                      kv_override: dict | None = None,
                      capture_kv: bool = False) -> DenoiserOutput:
        if t < 0:
            raise ValidationError(f"timestep must be >= 0, got {t}")
        c, h, w = z.data.shape
        p = self._params_for(c)

        emb = p.w_time @ _sinusoidal(t, self.embed_dim).astype(np.float32)
        if cond.embedding.size == self.embed_dim:
            emb = emb + p.w_prompt @ cond.embedding.astype(np.float32)
        elif cond.embedding.size:
            raise BackendError(
                f"conditioning embedding length {cond.embedding.size} != {self.embed_dim}"
            )
        x = z.data.astype(np.float32)
        hidden = _silu(_conv3x3(x, p.w_in, p.b_in) + emb[:, None, None])

        tokens = np.ascontiguousarray(hidden.reshape(self.features, h * w).T)
        attn_out, captured = self._attention(tokens, p, h, w, kv_override, capture_kv)
        hidden = hidden + attn_out.T.reshape(self.features, h, w)

        eps = np.tanh(_conv3x3(hidden, p.w_out, p.b_out)) * self.out_scale
        return DenoiserOutput(eps=eps.astype(np.float64), captured_kv=captured)


class ZeroDenoiser:
    """eps = 0 everywhere; inversion/denoising become pure schedule maps."""

    name = "zero"
    concurrent_safe = True

    def conditioning(self, prompt: str) -> Conditioning:
        return Conditioning(prompt=prompt, embedding=np.zeros(0))

    def predict_noise(self, z: LatentGrid, t: int, cond: Conditioning,
                      kv_override: dict | None = None,
                      capture_kv: bool = False) -> DenoiserOutput:
        if kv_override:
            raise BackendError("zero backend has no attention layers to override")
        return DenoiserOutput(
            eps=np.zeros_like(z.data),
            captured_kv={} if capture_kv else None,
        )


class ConstantDenoiser:
    """eps = a fixed value (or grid) regardless of input; analytically invertible."""

    name = "constant"
    concurrent_safe = True

    def __init__(self, value: float | np.ndarray = 0.1):
        self.value = value

    def conditioning(self, prompt: str) -> Conditioning:
        return Conditioning(prompt=prompt, embedding=np.zeros(0))

    def predict_noise(self, z: LatentGrid, t: int, cond: Conditioning,
                      kv_override: dict | None = None,
                      capture_kv: bool = False) -> DenoiserOutput:
        if kv_override:
            raise BackendError("constant backend has no attention layers to override")
        eps = np.broadcast_to(np.asarray(self.value, dtype=np.float64), z.data.shape).copy()
        return DenoiserOutput(eps=eps, captured_kv={} if capture_kv else None)


_REGISTRY: dict[str, type] = {
    "toy": ToyDenoiser,
    "zero": ZeroDenoiser,
    "constant": ConstantDenoiser,
}


def register_backend(name: str, factory: type) -> None:
    _REGISTRY[name] = factory


def list_backends() -> list[str]:
    return sorted(_REGISTRY)


def create_backend(name: str, **kwargs):
    if name not in _REGISTRY:
        raise BackendError(f"unknown backend {name!r}; available: {list_backends()}")
    return _REGISTRY[name](**kwargs)

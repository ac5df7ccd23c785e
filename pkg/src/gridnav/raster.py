"""Pixel-buffer primitives.

Rasters are plain numpy arrays: ``uint8`` of shape ``(h, w)`` for single
channel images or ``(h, w, 3)`` for colour. Masks are ``bool`` arrays of
shape ``(h, w)``. Pixel ``(x, y)`` lives at ``img[y, x]``; the origin is the
top-left corner with x to the right and y downwards.

HSV is encoded on the full 8-bit range: hue in ``[0, 360)`` degrees maps to
``floor(h * 256 / 360)`` so every code 0..255 is used and yellow (60 deg)
lands on 42 instead of being folded into a 0..179 half scale.
"""

import os

import numpy as np
from numba import njit

from ._validation import InvalidInputError, check_mask, check_raster

__all__ = [
    "rgb_to_hsv",
    "hsv_to_rgb",
    "perturb",
    "mask_pixel_count",
    "read_pnm",
    "write_pnm",
]


def _build_tables():
    # exact integer results, tabulated so the per-pixel kernel never divides
    mx = np.arange(256, dtype=np.int64)[:, None]
    d = np.arange(256, dtype=np.int64)[None, :]
    sat = np.where((mx > 0) & (d <= mx), (255 * d + mx // 2) // np.maximum(mx, 1), 0)
    hue = np.zeros((4, 256, 511), dtype=np.uint8)
    num = np.arange(-255, 256, dtype=np.int64)[None, :]
    dd = np.arange(1, 256, dtype=np.int64)[:, None]
    for i, sector in enumerate((0, 2, 4, 6)):
        hue[i, 1:] = (((sector * dd + num) * 256) // (6 * dd)) & 255
    return sat.astype(np.uint8), hue


_SAT_TABLE, _HUE_TABLE = _build_tables()


@njit(cache=True)
def _rgb_to_hsv_kernel(src, dst, sat_t, hue_t):
    h, w = src.shape[0], src.shape[1]
    for y in range(h):
        for x in range(w):
            r = np.int32(src[y, x, 0])
            g = np.int32(src[y, x, 1])
            b = np.int32(src[y, x, 2])
            mx = max(r, max(g, b))
            mn = min(r, min(g, b))
            d = mx - mn
            dst[y, x, 2] = mx
            if d == 0:
                dst[y, x, 0] = 0
                dst[y, x, 1] = 0
                continue
            dst[y, x, 1] = sat_t[mx, d]  # round-half-up of 255 d / mx
            # hue code = floor((sector + num / d) * 256 / 6) mod 256
            if mx == r:
                num = g - b
                sector = 0
                if num < 0:
                    sector = 3
            elif mx == g:
                num = b - r
                sector = 1
            else:
                num = r - g
                sector = 2
            dst[y, x, 0] = hue_t[sector, d, num + 255]


def rgb_to_hsv(img):
    """Convert an RGB raster to 8-bit full-range HSV.

    >>> import numpy as np
    >>> rgb_to_hsv(np.array([[[255, 255, 0]]], dtype=np.uint8))[0, 0].tolist()
    [42, 255, 255]
    """
    src = check_raster(img, channels=3)
    dst = np.empty_like(src)
    _rgb_to_hsv_kernel(src, dst, _SAT_TABLE, _HUE_TABLE)
    return dst


def hsv_to_rgb(img):
    """Reference inverse of :func:`rgb_to_hsv` (hue taken at the code's bin centre)."""
    src = check_raster(img, channels=3).astype(np.float64)
    h = (src[..., 0] + 0.5) * (6.0 / 256.0)
    s = src[..., 1] / 255.0
    v = src[..., 2]
    i = np.floor(h).astype(np.int64) % 6
    f = h - np.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    out = np.empty(src.shape, dtype=np.float64)
    out[..., 0] = np.choose(i, choices_r)
    out[..., 1] = np.choose(i, choices_g)
    out[..., 2] = np.choose(i, choices_b)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def gaussian_kernel(sigma, truncate=3.0):
    """Normalised 1-D Gaussian taps out to ``truncate * sigma``."""
    r = int(truncate * sigma + 0.5)
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return (k / k.sum()).astype(np.float32)


@njit(cache=True)
def _mix64(z):
    # SplitMix64 finaliser: a counter-based hash, so samples are independent
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _axpy(dst, a, src):
    for i in range(dst.shape[0]):
        dst[i] += a * src[i]


@njit(cache=True)
def _perturb_kernel(src, h, w, c, k, gain, seed, noise_scale, out):
    """Blur (replicated borders), gain, noise and uint8 rounding over flat buffers.

    The noise of sample ``i`` is the centred sum of the four low bytes of
    ``mix64(seed + i * golden)``; ``noise_scale = 0`` disables it. Loops
    run tap-outer, pixel-inner so the compiler can vectorise them.
    """
    r = k.shape[0] // 2
    n = w * c
    tmp = np.zeros(h * n, np.float32)
    row = np.empty(n, np.float32)
    for y in range(h):
        base = y * n
        dst = tmp[base:base + n]
        for i in range(n):
            row[i] = src[base + i]
        for j in range(-r, r + 1):
            kj = k[j + r]
            off = j * c
            lo = max(0, -off)
            hi = min(n, n - off)
            _axpy(dst[lo:hi], kj, row[lo + off:hi + off])
            # samples whose tap falls outside the row reuse the edge pixel
            for i in range(0, lo):
                dst[i] += kj * row[i % c]
            for i in range(hi, n):
                dst[i] += kj * row[n - c + i % c]
    golden = np.uint64(0x9E3779B97F4A7C15)
    noisy = noise_scale != 0.0
    ns = np.empty(n, np.float32)
    for y in range(h):
        for i in range(n):
            row[i] = 0.0
        for j in range(-r, r + 1):
            yy = min(max(y + j, 0), h - 1)
            _axpy(row, k[j + r], tmp[yy * n:(yy + 1) * n])
        base = y * n
        if noisy:
            for i in range(n):
                z = _mix64(seed + np.uint64(base + i) * golden)
                ns[i] = np.float32(np.int32(z & np.uint64(255))
                                   + np.int32((z >> np.uint64(8)) & np.uint64(255))
                                   + np.int32((z >> np.uint64(16)) & np.uint64(255))
                                   + np.int32((z >> np.uint64(24)) & np.uint64(255)) - 510)
        else:
            ns[:] = 0.0
        for i in range(n):
            v = row[i] * gain + ns[i] * noise_scale + np.float32(0.5)
            v = min(max(v, np.float32(0.0)), np.float32(255.0))
            out[base + i] = np.uint8(np.int32(v))


def perturb(img, blur_sigma=0.0, brightness_gain=1.0, rng_seed=0, noise_sigma=0.0):
    """Blur, re-light and optionally add sensor noise to a raster.

    The Gaussian kernel is separable and truncated at 3 sigma; borders are
    replicated so a constant field stays constant. The gain multiplies every
    channel and the result is clamped to [0, 255]. ``noise_sigma`` adds
    zero-mean, approximately Gaussian noise (a standardised sum of four
    uniform bytes) drawn deterministically from ``rng_seed``.
    """
    src = check_raster(img)
    blur_sigma = max(0.0, float(blur_sigma))
    brightness_gain = max(0.0, float(brightness_gain))
    noise_sigma = max(0.0, float(noise_sigma))
    if blur_sigma == 0.0 and brightness_gain == 1.0 and noise_sigma == 0.0:
        return src.copy()

    h, w = src.shape[:2]
    c = 1 if src.ndim == 2 else src.shape[2]
    k = gaussian_kernel(blur_sigma) if blur_sigma > 0.0 else np.ones(1, np.float32)
    out = np.empty(src.shape, np.uint8)
    seed = np.random.SeedSequence(int(rng_seed)).generate_state(1, dtype=np.uint64)[0]
    # 147.8 is the standard deviation of a sum of four uniform bytes
    _perturb_kernel(np.ascontiguousarray(src).reshape(-1), h, w, c, k,
                    np.float32(brightness_gain), seed, np.float32(noise_sigma / 147.80),
                    out.reshape(-1))
    return out


def mask_pixel_count(mask, region=None):
    """Count set bits inside ``region = (x, y, width, height)``.

    ``None`` counts the whole mask. The region must lie inside the mask.
    """
    m = check_mask(mask)
    if region is None:
        return int(np.count_nonzero(m))
    x, y, w, h = (int(v) for v in region)
    if x < 0 or y < 0 or w < 0 or h < 0 or x + w > m.shape[1] or y + h > m.shape[0]:
        raise InvalidInputError(f"region {region} outside mask of shape {m.shape}")
    return int(np.count_nonzero(m[y : y + h, x : x + w]))


def write_pnm(path, img):
    """Write a binary PGM (P5) or PPM (P6) file with maxval 255."""
    arr = check_raster(img)
    magic = b"P6" if arr.ndim == 3 else b"P5"
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"%s\n%d %d\n255\n" % (magic, w, h))
        fh.write(arr.tobytes())


def _read_header_tokens(data, count):
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise InvalidInputError("truncated PNM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the pixel data
    return tokens, pos + 1


def read_pnm(path):
    """Read a binary PGM/PPM written by :func:`write_pnm` (or any maxval-255 file)."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), offset = _read_header_tokens(data, 4)
    if magic not in (b"P5", b"P6"):
        raise InvalidInputError(f"unsupported PNM magic {magic!r}")
    if int(maxval) != 255:
        raise InvalidInputError(f"only maxval 255 is supported, got {int(maxval)}")
    w, h = int(w), int(h)
    nch = 3 if magic == b"P6" else 1
    n = w * h * nch
    pixels = np.frombuffer(data, dtype=np.uint8, count=n, offset=offset)
    shape = (h, w, 3) if nch == 3 else (h, w)
    return pixels.reshape(shape).copy()

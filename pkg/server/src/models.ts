/**
 * Denoiser models hosted by the server.
 *
 * Models receive and return float32 images but compute in float64, so the
 * gaussian model agrees with an FFT-based implementation of the same
 * circular convolution to float32 rounding.  Outputs are never clamped;
 * range handling is the client loop's concern.
 */

import { readFileSync } from "fs";

export interface Image {
  height: number;
  width: number;
  channels: number;
  /** Row-major, channels interleaved. */
  data: Float32Array;
}

export interface Model {
  /** Human-readable summary for startup logging. */
  describe: string;
  denoise(img: Image): Image;
}

export interface ModelOptions {
  sigma?: number;
  weights?: string;
}

/**
 * Isotropic Gaussian taps on a size x size grid, normalized to sum 1.
 * Size must be odd.  Returned row-major.
 */
export function gaussianKernel(size: number, sigma: number): Float64Array {
  if (size < 1 || size % 2 === 0) {
    throw new Error(`kernel size must be a positive odd integer, got ${size}`);
  }
  if (!(sigma > 0)) {
    throw new Error(`sigma must be positive, got ${sigma}`);
  }
  const half = (size - 1) / 2;
  const taps = new Float64Array(size * size);
  let sum = 0;
  for (let u = 0; u < size; u++) {
    for (let v = 0; v < size; v++) {
      const t = Math.exp(-((u - half) ** 2 + (v - half) ** 2) / (2 * sigma * sigma));
      taps[u * size + v] = t;
      sum += t;
    }
  }
  for (let i = 0; i < taps.length; i++) taps[i] /= sum;
  return taps;
}

/**
 * Circular (periodic-boundary) convolution with an odd-ish kernel whose
 * center tap is ((kh-1)/2, (kw-1)/2).  Accumulates in float64 per output
 * element, rounds once on store.
 */
export function circularConvolve(img: Image, taps: Float64Array, kh: number, kw: number): Image {
  const { height: h, width: w, channels: c, data } = img;
  if (taps.length !== kh * kw) {
    throw new Error(`taps length ${taps.length} does not match ${kh}x${kw}`);
  }
  if (kh > h || kw > w) {
    throw new Error(`kernel ${kh}x${kw} larger than image ${h}x${w}`);
  }
  const out = new Float32Array(data.length);
  const c0 = (kh - 1) >> 1;
  const c1 = (kw - 1) >> 1;
  for (let m = 0; m < h; m++) {
    for (let n = 0; n < w; n++) {
      for (let ch = 0; ch < c; ch++) {
        let acc = 0;
        for (let u = 0; u < kh; u++) {
          const mm = (((m - u + c0) % h) + h) % h;
          for (let v = 0; v < kw; v++) {
            const nn = (((n - v + c1) % w) + w) % w;
            acc += taps[u * kw + v] * data[(mm * w + nn) * c + ch];
          }
        }
        out[(m * w + n) * c + ch] = acc;
      }
    }
  }
  return { height: h, width: w, channels: c, data: out };
}

function identityModel(): Model {
  return { describe: "identity", denoise: (img) => img };
}

function gaussianModel(sigma: number): Model {
  if (!(sigma > 0)) {
    throw new Error(`gaussian model needs --sigma > 0, got ${sigma}`);
  }
  // Footprint covers +-3 sigma — the same sizing rule the client package
  // uses, so both sides filter identically.
  const size = Math.max(3, 2 * Math.ceil(3 * sigma) + 1);
  const taps = gaussianKernel(size, sigma);
  return {
    describe: `gaussian(sigma=${sigma}, size=${size})`,
    denoise: (img) => circularConvolve(img, taps, size, size),
  };
}

/** User-supplied filter taps from a JSON file: a rectangular 2-D array. */
function convModel(weightsPath: string): Model {
  let parsed: unknown;
  try {
    parsed = JSON.parse(readFileSync(weightsPath, "utf8"));
  } catch (err) {
    throw new Error(`cannot load weights from ${weightsPath}: ${(err as Error).message}`);
  }
  if (!Array.isArray(parsed) || parsed.length === 0) {
    throw new Error(`${weightsPath}: expected a non-empty 2-D array of taps`);
  }
  const kh = parsed.length;
  const kw = Array.isArray(parsed[0]) ? (parsed[0] as unknown[]).length : 0;
  const taps = new Float64Array(kh * kw);
  for (let u = 0; u < kh; u++) {
    const row = parsed[u];
    if (!Array.isArray(row) || row.length !== kw || kw === 0) {
      throw new Error(`${weightsPath}: row ${u} is not a ${kw}-element array`);
    }
    for (let v = 0; v < kw; v++) {
      const t = row[v];
      if (typeof t !== "number" || !Number.isFinite(t)) {
        throw new Error(`${weightsPath}: tap [${u}][${v}] is not a finite number`);
      }
      taps[u * kw + v] = t;
    }
  }
  return {
    describe: `conv(${kh}x${kw} taps from ${weightsPath})`,
    denoise: (img) => circularConvolve(img, taps, kh, kw),
  };
}

export const MODEL_NAMES = ["identity", "gaussian", "conv"] as const;

/** Resolve a model by name; unknown names and missing knobs fail here. */
export function buildModel(name: string, opts: ModelOptions = {}): Model {
  switch (name) {
    case "identity":
      if (opts.sigma !== undefined) throw new Error("identity model takes no --sigma");
      if (opts.weights !== undefined) throw new Error("identity model takes no --weights");
      return identityModel();
    case "gaussian":
      if (opts.weights !== undefined) throw new Error("gaussian model takes no --weights");
      if (opts.sigma === undefined) throw new Error("gaussian model needs --sigma");
      return gaussianModel(opts.sigma);
    case "conv":
      if (opts.sigma !== undefined) throw new Error("conv model takes no --sigma");
      if (opts.weights === undefined) throw new Error("conv model needs --weights");
      return convModel(opts.weights);
    default:
      throw new Error(`unknown model '${name}' (expected one of: ${MODEL_NAMES.join(", ")})`);
  }
}

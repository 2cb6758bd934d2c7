/**
 * Image loading and preprocessing for the encoder.
 *
 * CT slices arrive as PNG (grayscale or RGB; 16-bit inputs are rescaled to
 * 8-bit by the decoder). Internally an image is a single intensity plane
 * in [0, 1]. The encoder input is that plane resized to 448x448 with
 * bilinear interpolation and normalized to [-1, 1] (rescale by 1/255
 * happens at decode; the mean/std here are 0.5/0.5).
 *
 * Train-time augmentation: horizontal flip (p=0.5), small rotation within
 * +-10 degrees, brightness/contrast jitter. All of it is driven by a
 * caller-supplied seeded RNG; eval mode never calls it.
 */

import { PNG } from 'pngjs';
import type { Rng } from './rng.js';

export const TARGET_SIZE = 448;

export interface Plane {
  width: number;
  height: number;
  data: Float32Array; // row-major intensities in [0, 1]
}

export function decodePng(blob: Buffer): Plane {
  const png = PNG.sync.read(blob);
  const { width, height, data } = png;
  const plane = new Float32Array(width * height);
  for (let i = 0; i < width * height; i++) {
    const off = i * 4;
    // luminance of RGBA; grayscale PNGs have r == g == b
    plane[i] = (data[off] + data[off + 1] + data[off + 2]) / (3 * 255);
  }
  return { width, height, data: plane };
}

function sampleBilinear(plane: Plane, x: number, y: number): number {
  const { width, height, data } = plane;
  const cx = Math.min(Math.max(x, 0), width - 1);
  const cy = Math.min(Math.max(y, 0), height - 1);
  const x0 = Math.floor(cx);
  const y0 = Math.floor(cy);
  const x1 = Math.min(x0 + 1, width - 1);
  const y1 = Math.min(y0 + 1, height - 1);
  const fx = cx - x0;
  const fy = cy - y0;
  const top = data[y0 * width + x0] * (1 - fx) + data[y0 * width + x1] * fx;
  const bottom = data[y1 * width + x0] * (1 - fx) + data[y1 * width + x1] * fx;
  return top * (1 - fy) + bottom * fy;
}

export function resize(plane: Plane, size: number = TARGET_SIZE): Plane {
  const out = new Float32Array(size * size);
  const sx = plane.width / size;
  const sy = plane.height / size;
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      out[y * size + x] = sampleBilinear(plane, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
    }
  }
  return { width: size, height: size, data: out };
}

/** Map [0, 1] intensities to the encoder's [-1, 1] input range. */
export function normalize(plane: Plane): Float32Array {
  const out = new Float32Array(plane.data.length);
  for (let i = 0; i < out.length; i++) out[i] = (plane.data[i] - 0.5) / 0.5;
  return out;
}

export function flipHorizontal(plane: Plane): Plane {
  const { width, height, data } = plane;
  const out = new Float32Array(data.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      out[y * width + x] = data[y * width + (width - 1 - x)];
    }
  }
  return { width, height, data: out };
}

export function rotate(plane: Plane, degrees: number): Plane {
  const { width, height } = plane;
  const rad = (degrees * Math.PI) / 180;
  const cos = Math.cos(rad);
  const sin = Math.sin(rad);
  const cxr = (width - 1) / 2;
  const cyr = (height - 1) / 2;
  const out = new Float32Array(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const dx = x - cxr;
      const dy = y - cyr;
      out[y * width + x] = sampleBilinear(plane, cxr + cos * dx + sin * dy, cyr - sin * dx + cos * dy);
    }
  }
  return { width, height, data: out };
}

export function adjustBrightnessContrast(plane: Plane, brightness: number, contrast: number): Plane {
  const out = new Float32Array(plane.data.length);
  for (let i = 0; i < out.length; i++) {
    const v = (plane.data[i] - 0.5) * contrast + 0.5 + brightness;
    out[i] = Math.min(Math.max(v, 0), 1);
  }
  return { width: plane.width, height: plane.height, data: out };
}

export interface AugmentOptions {
  hflip: boolean;       // flip with p = 0.5
  rotateDeg: number;    // max magnitude, degrees
  jitter: number;       // max brightness shift and contrast deviation
}

export function augment(plane: Plane, opts: AugmentOptions, rng: Rng): Plane {
  let out = plane;
  if (opts.hflip && rng() < 0.5) out = flipHorizontal(out);
  if (opts.rotateDeg > 0) out = rotate(out, (rng() * 2 - 1) * opts.rotateDeg);
  if (opts.jitter > 0) {
    const brightness = (rng() * 2 - 1) * opts.jitter;
    const contrast = 1 + (rng() * 2 - 1) * opts.jitter;
    out = adjustBrightnessContrast(out, brightness, contrast);
  }
  return out;
}

/**
 * Encoder backends.
 *
 * `Encoder` turns a normalized 448x448 plane into per-patch tokens and a
 * text prompt into one pooled embedding. The production backend drives a
 * pretrained medical SigLIP-class checkpoint through
 * `@huggingface/transformers` (an optional dependency: the default model
 * emits P=784 patch tokens of width d=1152 at 448x448 with 16x16 patches).
 * The mock backend is pure TypeScript, deterministic in the input bytes,
 * and exists so the file-format pipeline and its tests run on any machine
 * with no checkpoint or network access.
 */

import { fnv1a, gaussian, mulberry32 } from './rng.js';
import { TARGET_SIZE } from './image.js';

export interface TokenBatch {
  numTokens: number;
  channels: number;
  tokens: Float32Array; // token-major (numTokens x channels)
}

export interface Encoder {
  readonly numTokens: number;
  readonly channels: number;
  readonly promptWidth: number;
  patchTokens(plane: Float32Array): Promise<TokenBatch>;
  promptEmbedding(text: string): Promise<Float32Array>;
}

export interface MockEncoderOptions {
  numTokens?: number;
  channels?: number;
  promptWidth?: number;
  seed?: number;
}

/**
 * Deterministic stand-in for the real backbone. Tokens carry real image
 * statistics (per-patch mean, spread, and edge energy mixed through a
 * seeded random basis), so downstream training on mock features is
 * meaningful, and identical inputs produce identical bytes.
 */
export class MockEncoder implements Encoder {
  readonly numTokens: number;
  readonly channels: number;
  readonly promptWidth: number;
  private readonly seed: number;

  constructor(opts: MockEncoderOptions = {}) {
    this.numTokens = opts.numTokens ?? 784;
    this.channels = opts.channels ?? 1152;
    this.promptWidth = opts.promptWidth ?? this.channels;
    this.seed = opts.seed ?? 0;
    const grid = Math.sqrt(this.numTokens);
    if (!Number.isInteger(grid)) {
      throw new Error(`numTokens must be a square patch grid, got ${this.numTokens}`);
    }
  }

  async patchTokens(plane: Float32Array): Promise<TokenBatch> {
    if (plane.length !== TARGET_SIZE * TARGET_SIZE) {
      throw new Error(`expected a ${TARGET_SIZE}x${TARGET_SIZE} plane, got ${plane.length} values`);
    }
    const grid = Math.round(Math.sqrt(this.numTokens));
    const patch = TARGET_SIZE / grid;
    const basis = mulberry32(this.seed ^ 0x5eed);
    const w1 = Float32Array.from({ length: this.channels }, () => gaussian(basis));
    const w2 = Float32Array.from({ length: this.channels }, () => gaussian(basis));
    const w3 = Float32Array.from({ length: this.channels }, () => gaussian(basis));

    const contentSeed = fnv1a(new Uint8Array(plane.buffer, plane.byteOffset, plane.byteLength));
    const noise = mulberry32(contentSeed ^ this.seed);
    const tokens = new Float32Array(this.numTokens * this.channels);
    for (let py = 0; py < grid; py++) {
      for (let px = 0; px < grid; px++) {
        let sum = 0;
        let sumSq = 0;
        let edge = 0;
        let count = 0;
        const y0 = Math.floor(py * patch);
        const x0 = Math.floor(px * patch);
        const y1 = Math.min(Math.floor((py + 1) * patch), TARGET_SIZE);
        const x1 = Math.min(Math.floor((px + 1) * patch), TARGET_SIZE);
        for (let y = y0; y < y1; y++) {
          for (let x = x0; x < x1; x++) {
            const v = plane[y * TARGET_SIZE + x];
            sum += v;
            sumSq += v * v;
            if (x + 1 < x1) edge += Math.abs(plane[y * TARGET_SIZE + x + 1] - v);
            count++;
          }
        }
        const mean = sum / count;
        const spread = Math.sqrt(Math.max(sumSq / count - mean * mean, 0));
        const edgeEnergy = edge / count;
        const t = py * grid + px;
        for (let c = 0; c < this.channels; c++) {
          tokens[t * this.channels + c] =
            mean * w1[c] + spread * w2[c] + edgeEnergy * w3[c] + 0.01 * gaussian(noise);
        }
      }
    }
    return { numTokens: this.numTokens, channels: this.channels, tokens };
  }

  async promptEmbedding(text: string): Promise<Float32Array> {
    if (!text) throw new Error('prompt text must be non-empty');
    const rng = mulberry32(fnv1a(text) ^ this.seed);
    const vec = new Float32Array(this.promptWidth);
    let norm = 0;
    for (let i = 0; i < vec.length; i++) {
      vec[i] = gaussian(rng);
      norm += vec[i] * vec[i];
    }
    norm = Math.sqrt(norm);
    for (let i = 0; i < vec.length; i++) vec[i] /= norm;
    return vec;
  }
}

export interface SiglipEncoderOptions {
  modelId?: string;
  numTokens?: number;
  channels?: number;
}

/**
 * Real backbone via `@huggingface/transformers`. Loaded lazily; creating
 * the instance is cheap and only `load()` (or the first encode) touches
 * the checkpoint. The vision tower's last hidden state provides the patch
 * tokens; the text tower's pooled output provides the prompt embedding.
 */
export class SiglipEncoder implements Encoder {
  readonly numTokens: number;
  readonly channels: number;
  readonly promptWidth: number;
  readonly modelId: string;
  private backend: {
    model: any;
    textModel: any;
    tokenizer: any;
  } | null = null;

  constructor(opts: SiglipEncoderOptions = {}) {
    this.modelId = opts.modelId ?? 'google/medsiglip-448';
    this.numTokens = opts.numTokens ?? 784;
    this.channels = opts.channels ?? 1152;
    this.promptWidth = this.channels;
  }

  async load(): Promise<void> {
    if (this.backend) return;
    let mod: any;
    const name = '@huggingface/transformers';
    try {
      mod = await import(name);
    } catch {
      throw new Error(
        `${name} is not installed; install it (plus checkpoint access) for the real backbone, ` +
        'or use the mock encoder (--encoder mock)');
    }
    const model = await mod.SiglipVisionModel.from_pretrained(this.modelId);
    const textModel = await mod.SiglipTextModel.from_pretrained(this.modelId);
    const tokenizer = await mod.AutoTokenizer.from_pretrained(this.modelId);
    this.backend = { model, textModel, tokenizer };
  }

  async patchTokens(plane: Float32Array): Promise<TokenBatch> {
    await this.load();
    const { model } = this.backend!;
    // replicate the intensity plane to the 3 input channels, NCHW
    const pixels = new Float32Array(3 * plane.length);
    pixels.set(plane, 0);
    pixels.set(plane, plane.length);
    pixels.set(plane, 2 * plane.length);
    const { Tensor } = await import('@huggingface/transformers' as string);
    const input = new Tensor('float32', pixels, [1, 3, TARGET_SIZE, TARGET_SIZE]);
    const output = await model({ pixel_values: input });
    const hidden = output.last_hidden_state;
    const [, numTokens, channels] = hidden.dims;
    return { numTokens, channels, tokens: Float32Array.from(hidden.data) };
  }

  async promptEmbedding(text: string): Promise<Float32Array> {
    if (!text) throw new Error('prompt text must be non-empty');
    await this.load();
    const { textModel, tokenizer } = this.backend!;
    const inputs = await tokenizer(text, { padding: 'max_length', truncation: true });
    const output = await textModel(inputs);
    const pooled = output.pooler_output;
    const vec = Float32Array.from(pooled.data);
    let norm = 0;
    for (const v of vec) norm += v * v;
    norm = Math.sqrt(norm);
    return vec.map((v) => v / norm);
  }
}

export function makeEncoder(kind: string, opts: MockEncoderOptions & SiglipEncoderOptions): Encoder {
  if (kind === 'mock') return new MockEncoder(opts);
  if (kind === 'siglip') return new SiglipEncoder(opts);
  throw new Error(`unknown encoder ${kind}`);
}

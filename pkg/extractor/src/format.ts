/**
 * Binary writers/readers for the scorer's on-disk formats.
 *
 * Token file:  "PTOK" | u32 version=1 | u32 P | u32 d | P*d float32 LE, token-major.
 * Prompt file: "TEMB" | u32 version=1 | u32 d_t | d_t float32 LE.
 * Manifest:    UTF-8 CSV with header id,mos,path (paths relative to the CSV).
 *
 * Everything is explicitly little-endian. Files are written atomically
 * (temp file + rename) so a crashed run never leaves a torn file behind.
 */

import { promises as fs } from 'node:fs';
import path from 'node:path';

export const PTOK_MAGIC = 'PTOK';
export const TEMB_MAGIC = 'TEMB';
export const FORMAT_VERSION = 1;

export function encodeTokens(tokens: Float32Array, numTokens: number, channels: number): Buffer {
  if (tokens.length !== numTokens * channels) {
    throw new Error(`token payload ${tokens.length} != P*d = ${numTokens * channels}`);
  }
  const header = Buffer.alloc(16);
  header.write(PTOK_MAGIC, 0, 'ascii');
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(numTokens, 8);
  header.writeUInt32LE(channels, 12);
  const payload = Buffer.alloc(tokens.length * 4);
  for (let i = 0; i < tokens.length; i++) payload.writeFloatLE(tokens[i], i * 4);
  return Buffer.concat([header, payload]);
}

export function decodeTokens(blob: Buffer): { numTokens: number; channels: number; tokens: Float32Array } {
  if (blob.length < 16) throw new Error('truncated token header');
  if (blob.toString('ascii', 0, 4) !== PTOK_MAGIC) {
    throw new Error(`bad magic ${blob.toString('ascii', 0, 4)}`);
  }
  const version = blob.readUInt32LE(4);
  if (version !== FORMAT_VERSION) throw new Error(`unsupported version ${version}`);
  const numTokens = blob.readUInt32LE(8);
  const channels = blob.readUInt32LE(12);
  const expected = 16 + numTokens * channels * 4;
  if (blob.length !== expected) {
    throw new Error(`payload is ${blob.length - 16} bytes, expected ${expected - 16}`);
  }
  const tokens = new Float32Array(numTokens * channels);
  for (let i = 0; i < tokens.length; i++) tokens[i] = blob.readFloatLE(16 + i * 4);
  return { numTokens, channels, tokens };
}

export function encodePrompt(vec: Float32Array): Buffer {
  const header = Buffer.alloc(12);
  header.write(TEMB_MAGIC, 0, 'ascii');
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(vec.length, 8);
  const payload = Buffer.alloc(vec.length * 4);
  for (let i = 0; i < vec.length; i++) payload.writeFloatLE(vec[i], i * 4);
  return Buffer.concat([header, payload]);
}

export function decodePrompt(blob: Buffer): Float32Array {
  if (blob.length < 12) throw new Error('truncated prompt header');
  if (blob.toString('ascii', 0, 4) !== TEMB_MAGIC) {
    throw new Error(`bad magic ${blob.toString('ascii', 0, 4)}`);
  }
  const version = blob.readUInt32LE(4);
  if (version !== FORMAT_VERSION) throw new Error(`unsupported version ${version}`);
  const width = blob.readUInt32LE(8);
  if (blob.length !== 12 + width * 4) throw new Error('prompt payload size mismatch');
  const vec = new Float32Array(width);
  for (let i = 0; i < width; i++) vec[i] = blob.readFloatLE(12 + i * 4);
  return vec;
}

export async function writeFileAtomic(target: string, data: Buffer): Promise<void> {
  const tmp = path.join(path.dirname(target), `.${path.basename(target)}.tmp`);
  await fs.writeFile(tmp, data);
  await fs.rename(tmp, target);
}

export interface ManifestRow {
  id: string;
  mos: number;
  path: string;
}

export function encodeManifest(rows: ManifestRow[]): string {
  const lines = ['id,mos,path'];
  for (const row of rows) lines.push(`${row.id},${row.mos},${row.path}`);
  return lines.join('\n') + '\n';
}

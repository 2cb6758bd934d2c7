/**
 * Extraction jobs: walk a labeled image set, encode each slice, and emit
 * the scorer's token files plus a manifest; encode prompts to embedding
 * files. Unreadable images are logged and skipped (the manifest excludes
 * them). Eval mode forces augmentation off so extraction is a pure
 * function of the input bytes.
 */

import { promises as fs } from 'node:fs';
import path from 'node:path';

import type { Encoder } from './encoder.js';
import {
  encodeManifest, encodePrompt, encodeTokens, writeFileAtomic, type ManifestRow,
} from './format.js';
import { augment, decodePng, normalize, resize, type AugmentOptions } from './image.js';
import { fnv1a, mulberry32 } from './rng.js';

export const DEFAULT_PROMPT =
  'Rate the diagnostic quality of this low-dose CT slice on a 0-4 scale: ' +
  '0 nondiagnostic, 1 poor, 2 fair, 3 good, 4 excellent anatomy visibility. ' +
  'Consider noise, streak artifacts, and texture preservation. ' +
  'Return only one number 0-4.';

export interface LabelRow {
  file: string;
  mos: number;
}

/** Labels CSV: header `file,mos`, file paths relative to the image dir. */
export function parseLabels(csv: string): LabelRow[] {
  const lines = csv.trim().split(/\r?\n/);
  if (lines[0] !== 'file,mos') {
    throw new Error(`labels header must be file,mos, got ${lines[0]}`);
  }
  return lines.slice(1).filter((l) => l.length > 0).map((line) => {
    const comma = line.lastIndexOf(',');
    const file = line.slice(0, comma);
    const mos = Number(line.slice(comma + 1));
    if (!Number.isFinite(mos) || mos < 0 || mos > 4) {
      throw new Error(`${file}: mos ${line.slice(comma + 1)} outside [0, 4]`);
    }
    return { file, mos };
  });
}

export interface ExtractionJob {
  imageDir: string;
  labelsCsv: string;
  outDir: string;
  mode: 'train' | 'eval';
  augmentOptions: AugmentOptions;
  augmentCopies: number; // extra augmented copies per image (train mode)
  seed: number;
}

export interface ExtractionResult {
  manifestPath: string;
  written: number;
  skipped: string[];
}

function sampleIdFor(file: string): string {
  return path.basename(file).replace(/\.[^.]+$/, '');
}

export async function extractTokens(job: ExtractionJob, encoder: Encoder,
                                    log: (msg: string) => void = console.error): Promise<ExtractionResult> {
  const labels = parseLabels(await fs.readFile(job.labelsCsv, 'utf-8'));
  await fs.mkdir(job.outDir, { recursive: true });

  const augmenting = job.mode === 'train';
  const copies = augmenting ? job.augmentCopies : 0;
  const rows: ManifestRow[] = [];
  const skipped: string[] = [];

  for (const label of labels) {
    const imagePath = path.join(job.imageDir, label.file);
    let plane;
    try {
      plane = decodePng(await fs.readFile(imagePath));
    } catch (err) {
      log(`skipping ${label.file}: ${(err as Error).message}`);
      skipped.push(label.file);
      continue;
    }
    const baseId = sampleIdFor(label.file);
    for (let copy = 0; copy <= copies; copy++) {
      let view = plane;
      if (augmenting && copy > 0) {
        // per-(image, copy) stream keyed on content, independent of order
        const rng = mulberry32((fnv1a(label.file) ^ job.seed) + copy);
        view = augment(plane, job.augmentOptions, rng);
      }
      const encoded = await encoder.patchTokens(normalize(resize(view)));
      const id = copy === 0 ? baseId : `${baseId}_aug${copy}`;
      const rel = `${id}.ptok`;
      await writeFileAtomic(path.join(job.outDir, rel),
                            encodeTokens(encoded.tokens, encoded.numTokens, encoded.channels));
      rows.push({ id, mos: label.mos, path: rel });
    }
  }

  if (rows.length === 0) throw new Error('no images could be extracted');
  const manifestPath = path.join(job.outDir, 'manifest.csv');
  await writeFileAtomic(manifestPath, Buffer.from(encodeManifest(rows), 'utf-8'));
  return { manifestPath, written: rows.length, skipped };
}

export async function extractPrompt(text: string, outFile: string,
                                    encoder: Encoder): Promise<void> {
  const vec = await encoder.promptEmbedding(text);
  await fs.mkdir(path.dirname(outFile), { recursive: true });
  await writeFileAtomic(outFile, encodePrompt(vec));
}

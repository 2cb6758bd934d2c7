#!/usr/bin/env node
/**
 * CLI: encode labeled images and text prompts into the scorer's file
 * formats.
 *
 *   filmiqa-extractor tokens --images DIR --labels labels.csv --out DIR
 *       [--encoder mock|siglip] [--model ID] [--p 784] [--d 1152]
 *       [--mode train|eval] [--no-hflip] [--rotate 10] [--jitter 0.1]
 *       [--augment-copies 0] [--seed 0]
 *
 *   filmiqa-extractor prompt --text "..." --out prompt.temb
 *       [--encoder mock|siglip] [--model ID] [--dt 1152]
 *
 * Eval mode forces augmentation off. The default prompt is a clinical
 * instruction asking for a 0..4 diagnostic-quality rating.
 */

import { parseArgs } from 'node:util';
import { pathToFileURL } from 'node:url';

import { makeEncoder } from './encoder.js';
import { DEFAULT_PROMPT, extractPrompt, extractTokens } from './extract.js';

function usageError(msg: string): never {
  console.error(`usage error: ${msg}`);
  process.exit(2);
}

async function tokensCommand(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      images: { type: 'string' },
      labels: { type: 'string' },
      out: { type: 'string' },
      encoder: { type: 'string', default: 'siglip' },
      model: { type: 'string' },
      p: { type: 'string', default: '784' },
      d: { type: 'string', default: '1152' },
      mode: { type: 'string', default: 'train' },
      'no-hflip': { type: 'boolean', default: false },
      rotate: { type: 'string', default: '10' },
      jitter: { type: 'string', default: '0.1' },
      'augment-copies': { type: 'string', default: '0' },
      seed: { type: 'string', default: '0' },
    },
  });
  if (!values.images || !values.labels || !values.out) {
    usageError('tokens requires --images, --labels, --out');
  }
  if (values.mode !== 'train' && values.mode !== 'eval') {
    usageError(`--mode must be train or eval, got ${values.mode}`);
  }
  const encoder = makeEncoder(values.encoder!, {
    modelId: values.model,
    numTokens: Number(values.p),
    channels: Number(values.d),
    seed: Number(values.seed),
  });
  console.log(`[tokens] images=${values.images} labels=${values.labels} out=${values.out} ` +
              `encoder=${values.encoder} mode=${values.mode} p=${values.p} d=${values.d} ` +
              `seed=${values.seed} augment-copies=${values['augment-copies']}`);
  const result = await extractTokens({
    imageDir: values.images!,
    labelsCsv: values.labels!,
    outDir: values.out!,
    mode: values.mode as 'train' | 'eval',
    augmentOptions: {
      hflip: !values['no-hflip'],
      rotateDeg: Number(values.rotate),
      jitter: Number(values.jitter),
    },
    augmentCopies: Number(values['augment-copies']),
    seed: Number(values.seed),
  }, encoder);
  console.log(`wrote ${result.written} token files -> ${result.manifestPath}` +
              (result.skipped.length ? `; skipped ${result.skipped.length}` : ''));
}

async function promptCommand(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      text: { type: 'string', default: DEFAULT_PROMPT },
      out: { type: 'string' },
      encoder: { type: 'string', default: 'siglip' },
      model: { type: 'string' },
      dt: { type: 'string', default: '1152' },
      seed: { type: 'string', default: '0' },
    },
  });
  if (!values.out) usageError('prompt requires --out');
  if (!values.text) usageError('prompt text must be non-empty');
  const encoder = makeEncoder(values.encoder!, {
    modelId: values.model,
    promptWidth: Number(values.dt),
    channels: Number(values.dt),
    seed: Number(values.seed),
  });
  console.log(`[prompt] out=${values.out} encoder=${values.encoder} dt=${values.dt}`);
  await extractPrompt(values.text!, values.out!, encoder);
  console.log(`wrote ${values.out}`);
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === 'tokens') await tokensCommand(rest);
    else if (command === 'prompt') await promptCommand(rest);
    else usageError(`unknown command ${command ?? '(none)'}; expected tokens or prompt`);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    process.exit(1);
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main();
}

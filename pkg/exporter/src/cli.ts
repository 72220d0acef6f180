#!/usr/bin/env node
/**
 * Command line front end.
 *
 *   export    run a checkpoint over input sections and dump decoder
 *             activations, softmax probabilities, and stochastic passes
 *   make-toy  build and save the seeded toy encoder-decoder checkpoint
 *             (plus optional sample inputs) used in tests and demos
 */

import * as tf from '@tensorflow/tfjs';
import { mkdirSync } from 'fs';
import { join } from 'path';
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import { ExportSpec, parsePasses, runExport } from './export';
import { buildToyModel, saveModelToDir } from './model';
import { writeNpy } from './npy';
import { seededUniform } from './rng';

interface ExportArgs {
  ckpt: string;
  layers: string;
  passes: string;
  out: string;
  inputs: string[];
}

async function cmdExport(argv: ExportArgs): Promise<void> {
  const spec: ExportSpec = {
    checkpoint: argv.ckpt,
    inputs: argv.inputs,
    layers: argv.layers
      .split(',')
      .map((s) => s.trim())
      .filter((s) => s.length > 0),
    passes: parsePasses(argv.passes),
    outDir: argv.out,
  };
  const result = await runExport(spec);
  for (const dir of result.sectionDirs) {
    console.log(`wrote ${dir}`);
  }
}

interface MakeToyArgs {
  out: string;
  seed: number;
  epochs?: number;
  sampleInputs: number;
  hw: string;
}

async function cmdMakeToy(argv: MakeToyArgs): Promise<void> {
  const m = argv.hw.match(/^(\d+)[xX](\d+)$/);
  if (!m) {
    throw new Error(`--hw must look like 16x16, got "${argv.hw}"`);
  }
  const hw: [number, number] = [parseInt(m[1], 10), parseInt(m[2], 10)];
  if (hw[0] % 2 !== 0 || hw[1] % 2 !== 0) {
    throw new Error('--hw sides must be even (the toy net pools by 2)');
  }
  if (argv.epochs !== undefined) {
    if (argv.epochs < 1) {
      throw new Error('--epochs must be >= 1');
    }
    for (let k = 1; k <= argv.epochs; k++) {
      // reseeded weights per epoch stand in for a training trajectory
      const model = buildToyModel(argv.seed + 100 * k, { inputHw: hw });
      await saveModelToDir(model, join(argv.out, `epoch_${k}`));
      model.dispose();
    }
    console.log(`wrote ${argv.epochs} epoch checkpoints under ${argv.out}`);
  } else {
    const model = buildToyModel(argv.seed, { inputHw: hw });
    await saveModelToDir(model, argv.out);
    model.dispose();
    console.log(`wrote checkpoint ${argv.out}`);
  }
  if (argv.sampleInputs > 0) {
    const dir = join(argv.out, 'inputs');
    mkdirSync(dir, { recursive: true });
    for (let i = 1; i <= argv.sampleInputs; i++) {
      const id = `s${String(i).padStart(3, '0')}`;
      const data = seededUniform(argv.seed * 1000 + i, hw[0] * hw[1]);
      writeNpy(join(dir, `${id}.npy`), data, [1, hw[0], hw[1]]);
    }
    console.log(`wrote ${argv.sampleInputs} sample inputs under ${dir}`);
  }
}

async function main(): Promise<void> {
  tf.setBackend('cpu');
  await tf.ready();
  await yargs(hideBin(process.argv))
    .scriptName('radmi-export')
    .command(
      'export',
      'dump decoder activations and probabilities for input sections',
      (y) =>
        y
          .option('ckpt', {
            type: 'string',
            demandOption: true,
            describe: 'checkpoint directory (epochs mode: directory of epoch_<k>/ checkpoints)',
          })
          .option('layers', {
            type: 'string',
            demandOption: true,
            describe: 'comma-separated decoder layer names, coarse to fine (at least 2)',
          })
          .option('passes', {
            type: 'string',
            default: 'single',
            describe: 'single | dropout:<T> | epochs',
          })
          .option('out', { type: 'string', demandOption: true, describe: 'output dataset directory' })
          .option('inputs', {
            type: 'string',
            array: true,
            demandOption: true,
            describe: 'input section .npy files (C x H x W float32)',
          }),
      (argv) => cmdExport(argv as unknown as ExportArgs)
    )
    .command(
      'make-toy',
      'save a seeded toy encoder-decoder checkpoint for tests and demos',
      (y) =>
        y
          .option('out', { type: 'string', demandOption: true, describe: 'checkpoint directory to create' })
          .option('seed', { type: 'number', default: 7 })
          .option('epochs', { type: 'number', describe: 'write epoch_1..E checkpoint subdirectories instead' })
          .option('sample-inputs', {
            type: 'number',
            default: 0,
            describe: 'also write N seeded input sections under <out>/inputs/',
          })
          .option('hw', { type: 'string', default: '16x16', describe: 'input resolution, e.g. 16x16' }),
      (argv) => cmdMakeToy(argv as unknown as MakeToyArgs)
    )
    .demandCommand(1, 'pick a command: export or make-toy')
    .strict()
    .fail((msg, err) => {
      console.error(err ? err.message : msg);
      process.exit(1);
    })
    .parseAsync();
}

main().catch((e) => {
  console.error(e instanceof Error ? e.message : e);
  process.exit(1);
});

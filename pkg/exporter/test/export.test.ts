import * as tf from '@tensorflow/tfjs';
import { mkdtempSync, readFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { beforeAll, describe, expect, it } from 'vitest';
import { listEpochDirs, parsePasses, resolveFeatureLayers, runExport } from '../src/export';
import { buildToyModel, loadModelFromDir, saveModelToDir } from '../src/model';
import { readNpy, writeNpy } from '../src/npy';
import { seededUniform } from '../src/rng';

function tmp(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix));
}

let ckptDir: string;
let inputPath: string;

beforeAll(async () => {
  tf.setBackend('cpu');
  await tf.ready();
  ckptDir = tmp('ckpt-');
  const model = buildToyModel(7);
  await saveModelToDir(model, ckptDir);
  model.dispose();
  const inputDir = tmp('inputs-');
  inputPath = join(inputDir, 's001.npy');
  writeNpy(inputPath, seededUniform(123, 16 * 16), [1, 16, 16]);
});

describe('checkpoint save/load', () => {
  it('restores weights exactly', async () => {
    const original = buildToyModel(21);
    const dir = tmp('ckpt-rt-');
    await saveModelToDir(original, dir);
    const restored = await loadModelFromDir(dir);
    const a = original.getWeights();
    const b = restored.getWeights();
    expect(b.length).toBe(a.length);
    for (let i = 0; i < a.length; i++) {
      const wa = a[i].dataSync() as Float32Array;
      const wb = b[i].dataSync() as Float32Array;
      expect(Array.from(wb)).toEqual(Array.from(wa));
    }
    original.dispose();
    restored.dispose();
  });

  it('fails clearly on a missing checkpoint', async () => {
    await expect(loadModelFromDir('/no/such/ckpt')).rejects.toThrow(/model\.json/);
  });
});

describe('layer resolution', () => {
  it('lists available layer names when a name does not resolve', () => {
    const model = buildToyModel(7);
    expect(() => resolveFeatureLayers(model, ['dec1', 'nope'])).toThrow(
      /no layer named "nope"; available layers: .*dec1.*dec2/
    );
    model.dispose();
  });

  it('requires at least two layers', () => {
    const model = buildToyModel(7);
    expect(() => resolveFeatureLayers(model, ['dec1'])).toThrow(/at least 2/);
    model.dispose();
  });

  it('refuses non-4D activations', () => {
    const input = tf.input({ shape: [8, 8, 1], name: 'x' });
    const c1 = tf.layers
      .conv2d({ filters: 2, kernelSize: 3, padding: 'same', name: 'c1' })
      .apply(input) as tf.SymbolicTensor;
    const flat = tf.layers.flatten({ name: 'flat' }).apply(c1) as tf.SymbolicTensor;
    const head = tf.layers.dense({ units: 4, name: 'head' }).apply(flat) as tf.SymbolicTensor;
    const model = tf.model({ inputs: input, outputs: head });
    expect(() => resolveFeatureLayers(model, ['c1', 'head'])).toThrow(/rank-2 activation, expected 4-D/);
    model.dispose();
  });

  it('enforces coarse to fine ordering', () => {
    const model = buildToyModel(7);
    expect(() => resolveFeatureLayers(model, ['dec2', 'dec1'])).toThrow(/coarse to fine/);
    model.dispose();
  });
});

describe('passes parsing', () => {
  it('parses the three modes', () => {
    expect(parsePasses('single')).toEqual({ mode: 'single' });
    expect(parsePasses('dropout:3')).toEqual({ mode: 'dropout', samples: 3 });
    expect(parsePasses('epochs')).toEqual({ mode: 'epochs' });
  });

  it('rejects nonsense and zero sample counts', () => {
    expect(() => parsePasses('dropout:0')).toThrow(/>= 1/);
    expect(() => parsePasses('both')).toThrow(/unrecognized/);
  });
});

describe('single-pass export', () => {
  it('writes decoder features and probs with the contract shapes', async () => {
    const out = tmp('exp-single-');
    const res = await runExport({
      checkpoint: ckptDir,
      inputs: [inputPath],
      layers: ['dec1', 'dec2'],
      passes: { mode: 'single' },
      outDir: out,
    });
    expect(res.sectionDirs).toEqual([join(out, 'sections', 's001')]);

    const l1 = readNpy(join(out, 'sections', 's001', 'decoder_L1.npy'));
    expect(l1.shape).toEqual([6, 8, 8]);
    expect(l1.data).toBeInstanceOf(Float32Array);
    const l2 = readNpy(join(out, 'sections', 's001', 'decoder_L2.npy'));
    expect(l2.shape).toEqual([4, 16, 16]);

    const probs = readNpy(join(out, 'sections', 's001', 'probs.npy'));
    expect(probs.shape).toEqual([3, 16, 16]);
    const p = probs.data as Float32Array;
    for (let px = 0; px < 16 * 16; px++) {
      let sum = 0;
      for (let k = 0; k < 3; k++) {
        const v = p[k * 256 + px];
        expect(v).toBeGreaterThanOrEqual(0);
        expect(v).toBeLessThanOrEqual(1);
        sum += v;
      }
      expect(Math.abs(sum - 1)).toBeLessThan(1e-4);
    }
  });

  it('is bit-identical across runs with dropout off', async () => {
    const a = tmp('exp-det-a-');
    const b = tmp('exp-det-b-');
    for (const out of [a, b]) {
      await runExport({
        checkpoint: ckptDir,
        inputs: [inputPath],
        layers: ['dec1', 'dec2'],
        passes: { mode: 'single' },
        outDir: out,
      });
    }
    for (const name of ['decoder_L1.npy', 'decoder_L2.npy', 'probs.npy']) {
      const fa = readFileSync(join(a, 'sections', 's001', name));
      const fb = readFileSync(join(b, 'sections', 's001', name));
      expect(fa.equals(fb)).toBe(true);
    }
  });
});

describe('dropout export', () => {
  it('stacks T stochastic passes that stay on the simplex', async () => {
    const out = tmp('exp-drop-');
    await runExport({
      checkpoint: ckptDir,
      inputs: [inputPath],
      layers: ['dec1', 'dec2'],
      passes: { mode: 'dropout', samples: 3 },
      outDir: out,
    });
    const stack = readNpy(join(out, 'sections', 's001', 'dropout_probs.npy'));
    expect(stack.shape).toEqual([3, 3, 16, 16]);
    const d = stack.data as Float32Array;
    const per = 3 * 16 * 16;
    for (let t = 0; t < 3; t++) {
      for (let px = 0; px < 16 * 16; px++) {
        let sum = 0;
        for (let k = 0; k < 3; k++) {
          sum += d[t * per + k * 256 + px];
        }
        expect(Math.abs(sum - 1)).toBeLessThan(1e-4);
      }
    }
    // masks are drawn fresh per pass, so at least one pair must differ
    const p0 = d.slice(0, per);
    const p1 = d.slice(per, 2 * per);
    const p2 = d.slice(2 * per, 3 * per);
    const same01 = p0.every((v, i) => v === p1[i]);
    const same02 = p0.every((v, i) => v === p2[i]);
    expect(same01 && same02).toBe(false);
    // the deterministic files are still written alongside
    expect(readNpy(join(out, 'sections', 's001', 'probs.npy')).shape).toEqual([3, 16, 16]);
  });
});

describe('epochs export', () => {
  it('stacks per-epoch argmax labels', async () => {
    const root = tmp('ckpt-epochs-');
    for (let k = 1; k <= 2; k++) {
      const model = buildToyModel(50 + k);
      await saveModelToDir(model, join(root, `epoch_${k}`));
      model.dispose();
    }
    expect(listEpochDirs(root)).toEqual([join(root, 'epoch_1'), join(root, 'epoch_2')]);

    const out = tmp('exp-epochs-');
    await runExport({
      checkpoint: root,
      inputs: [inputPath],
      layers: ['dec1', 'dec2'],
      passes: { mode: 'epochs' },
      outDir: out,
    });
    const preds = readNpy(join(out, 'sections', 's001', 'epoch_preds.npy'));
    expect(preds.shape).toEqual([2, 16, 16]);
    expect(preds.data).toBeInstanceOf(Int32Array);
    for (const v of preds.data) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThan(3);
    }
    // features and probs come from the final epoch
    expect(readNpy(join(out, 'sections', 's001', 'decoder_L2.npy')).shape).toEqual([4, 16, 16]);
    expect(readNpy(join(out, 'sections', 's001', 'probs.npy')).shape).toEqual([3, 16, 16]);
  });

  it('requires at least one epoch checkpoint', () => {
    const empty = tmp('ckpt-empty-');
    expect(() => listEpochDirs(empty)).toThrow(/found none/);
  });
});

describe('input validation', () => {
  it('rejects inputs that are not C x H x W float32', async () => {
    const dir = tmp('bad-input-');
    const bad = join(dir, 'flat.npy');
    writeNpy(bad, new Float32Array(16), [4, 4]);
    await expect(
      runExport({
        checkpoint: ckptDir,
        inputs: [bad],
        layers: ['dec1', 'dec2'],
        passes: { mode: 'single' },
        outDir: tmp('exp-bad-'),
      })
    ).rejects.toThrow(/C x H x W float32/);
  });

  it('rejects an empty input list', async () => {
    await expect(
      runExport({
        checkpoint: ckptDir,
        inputs: [],
        layers: ['dec1', 'dec2'],
        passes: { mode: 'single' },
        outDir: tmp('exp-none-'),
      })
    ).rejects.toThrow(/no input sections/);
  });
});

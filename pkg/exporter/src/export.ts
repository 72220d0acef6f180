/**
 * Activation export: run a checkpoint over input sections and write the
 * dataset layout the radmi CLI consumes.
 *
 * Per section directory:
 *   decoder_L<i>.npy   C x H x W float32, one per hooked layer, coarse to fine
 *   probs.npy          K x H x W float32 softmax output (deterministic pass)
 *   dropout_probs.npy  T x K x H x W float32, passes mode dropout:<T>
 *   epoch_preds.npy    E x H x W int32 argmax labels, passes mode epochs
 *
 * Layers are hooked by rebuilding a functional model over the checkpoint's
 * existing graph (tf.model with extra outputs); the architecture itself is
 * never modified.
 */

import * as tf from '@tensorflow/tfjs';
import { mkdirSync, readdirSync, statSync } from 'fs';
import { basename, join } from 'path';
import { loadModelFromDir } from './model';
import { readNpy, writeNpy } from './npy';

export type PassSpec =
  | { mode: 'single' }
  | { mode: 'dropout'; samples: number }
  | { mode: 'epochs' };

export interface ExportSpec {
  /** Checkpoint directory; in epochs mode, a directory holding epoch_<k>/ checkpoints. */
  checkpoint: string;
  /** One .npy file per section, each C x H x W float32. */
  inputs: string[];
  /** Decoder layer names to capture, ordered coarse to fine; at least 2. */
  layers: string[];
  passes: PassSpec;
  outDir: string;
}

export interface ExportResult {
  sectionDirs: string[];
}

export function parsePasses(text: string): PassSpec {
  if (text === 'single') return { mode: 'single' };
  if (text === 'epochs') return { mode: 'epochs' };
  const m = text.match(/^dropout:(\d+)$/);
  if (m) {
    const samples = parseInt(m[1], 10);
    if (samples < 1) {
      throw new Error('dropout sample count must be >= 1');
    }
    return { mode: 'dropout', samples };
  }
  throw new Error(`unrecognized passes spec "${text}"; use single, dropout:<T>, or epochs`);
}

/**
 * Resolve layer names to their symbolic outputs, enforcing the contract:
 * at least two layers, every activation 4-D [batch, h, w, c], and spatial
 * resolution non-decreasing from first to last.
 */
export function resolveFeatureLayers(model: tf.LayersModel, names: string[]): tf.SymbolicTensor[] {
  if (names.length < 2) {
    throw new Error(`need at least 2 decoder layers to hook, got ${names.length}`);
  }
  const available = model.layers.map((l) => l.name).join(', ');
  const outputs: tf.SymbolicTensor[] = [];
  for (const name of names) {
    let layer: tf.layers.Layer;
    try {
      layer = model.getLayer(name);
    } catch {
      throw new Error(`no layer named "${name}"; available layers: ${available}`);
    }
    const out = layer.output as tf.SymbolicTensor;
    if (out.shape.length !== 4) {
      throw new Error(
        `layer "${name}" produces a rank-${out.shape.length} activation, expected 4-D [batch, h, w, c]`
      );
    }
    outputs.push(out);
  }
  for (let i = 1; i < outputs.length; i++) {
    const ph = outputs[i - 1].shape[1]!;
    const pw = outputs[i - 1].shape[2]!;
    const nh = outputs[i].shape[1]!;
    const nw = outputs[i].shape[2]!;
    if (nh < ph || nw < pw) {
      throw new Error(
        `layers must be ordered coarse to fine: "${names[i - 1]}" is ${ph}x${pw} but "${names[i]}" is ${nh}x${nw}`
      );
    }
  }
  return outputs;
}

export function listEpochDirs(root: string): string[] {
  let entries: string[];
  try {
    entries = readdirSync(root);
  } catch {
    throw new Error(`checkpoint directory not found: ${root}`);
  }
  const epochs = entries
    .filter((n) => /^epoch_\d+$/.test(n) && statSync(join(root, n)).isDirectory())
    .sort((a, b) => parseInt(a.slice(6), 10) - parseInt(b.slice(6), 10));
  if (epochs.length === 0) {
    throw new Error(`epochs mode needs epoch_<k>/ checkpoint directories under ${root}, found none`);
  }
  return epochs.map((n) => join(root, n));
}

function loadInputSection(path: string): { x: tf.Tensor4D; id: string } {
  const { data, shape } = readNpy(path);
  if (!(data instanceof Float32Array) || shape.length !== 3) {
    throw new Error(`${path}: input sections must be C x H x W float32, got shape (${shape.join(', ')})`);
  }
  const [c, h, w] = shape;
  const x = tf.tidy(() => tf.tensor3d(data, [c, h, w]).transpose([1, 2, 0]).expandDims(0) as tf.Tensor4D);
  return { x, id: basename(path).replace(/\.npy$/, '') };
}

function toChw(act: tf.Tensor): { data: Float32Array; shape: number[] } {
  let shape: number[] = [];
  const data = tf.tidy(() => {
    const chw = (act as tf.Tensor4D).squeeze([0]).transpose([2, 0, 1]);
    shape = chw.shape.slice();
    return chw.dataSync() as Float32Array;
  });
  return { data: new Float32Array(data), shape };
}

function exportDeterministic(extraction: tf.LayersModel, x: tf.Tensor4D, layerCount: number, dir: string): void {
  const outs = extraction.predict(x) as tf.Tensor[];
  for (let i = 0; i < layerCount; i++) {
    const feat = toChw(outs[i]);
    writeNpy(join(dir, `decoder_L${i + 1}.npy`), feat.data, feat.shape);
  }
  const probs = toChw(outs[layerCount]);
  writeNpy(join(dir, 'probs.npy'), probs.data, probs.shape);
  outs.forEach((t) => t.dispose());
}

function exportDropout(extraction: tf.LayersModel, x: tf.Tensor4D, samples: number, dir: string): void {
  const passes: Float32Array[] = [];
  let shape: number[] = [];
  for (let t = 0; t < samples; t++) {
    // training: true keeps dropout live; masks are drawn fresh each pass
    const outs = extraction.apply(x, { training: true }) as tf.Tensor[];
    const probs = toChw(outs[outs.length - 1]);
    passes.push(probs.data);
    shape = probs.shape;
    outs.forEach((o) => o.dispose());
  }
  const per = shape[0] * shape[1] * shape[2];
  const stacked = new Float32Array(samples * per);
  passes.forEach((p, i) => stacked.set(p, i * per));
  writeNpy(join(dir, 'dropout_probs.npy'), stacked, [samples, ...shape]);
}

function exportEpochPreds(models: tf.LayersModel[], x: tf.Tensor4D, dir: string): void {
  const passes: Int32Array[] = [];
  let hw: number[] = [];
  for (const m of models) {
    const data = tf.tidy(() => {
      const probs = m.predict(x) as tf.Tensor4D;
      const pred = probs.argMax(-1).squeeze([0]);
      hw = pred.shape.slice();
      return pred.dataSync() as Int32Array;
    });
    passes.push(new Int32Array(data));
  }
  const per = hw[0] * hw[1];
  const stacked = new Int32Array(passes.length * per);
  passes.forEach((p, i) => stacked.set(p, i * per));
  writeNpy(join(dir, 'epoch_preds.npy'), stacked, [passes.length, hw[0], hw[1]]);
}

/** Export every input section under <outDir>/sections/<id>/. */
export async function runExport(spec: ExportSpec): Promise<ExportResult> {
  if (spec.inputs.length === 0) {
    throw new Error('no input sections given');
  }
  const checkpoints = spec.passes.mode === 'epochs' ? listEpochDirs(spec.checkpoint) : [spec.checkpoint];
  // in epochs mode the last checkpoint is the final model; features and
  // probs come from it, per-epoch passes only contribute argmax labels
  const model = await loadModelFromDir(checkpoints[checkpoints.length - 1]);
  const featureOuts = resolveFeatureLayers(model, spec.layers);
  if (model.outputs.length !== 1) {
    throw new Error(`expected a single softmax output, model has ${model.outputs.length}`);
  }
  const extraction = tf.model({ inputs: model.inputs, outputs: [...featureOuts, model.outputs[0]] });
  const epochModels: tf.LayersModel[] = [];
  if (spec.passes.mode === 'epochs') {
    for (const dir of checkpoints) {
      epochModels.push(await loadModelFromDir(dir));
    }
  }

  const sectionDirs: string[] = [];
  for (const inputPath of spec.inputs) {
    const { x, id } = loadInputSection(inputPath);
    const dir = join(spec.outDir, 'sections', id);
    mkdirSync(dir, { recursive: true });
    exportDeterministic(extraction, x, spec.layers.length, dir);
    if (spec.passes.mode === 'dropout') {
      exportDropout(extraction, x, spec.passes.samples, dir);
    } else if (spec.passes.mode === 'epochs') {
      exportEpochPreds(epochModels, x, dir);
    }
    x.dispose();
    sectionDirs.push(dir);
  }
  return { sectionDirs };
}

/**
 * Toy encoder-decoder used by tests and demos, plus directory-based
 * checkpoint save/load. The pure JS @tensorflow/tfjs build ships no
 * filesystem IO, so both directions go through custom io handlers that
 * read/write model.json + weights.bin in a plain directory.
 */

import * as tf from '@tensorflow/tfjs';
import { existsSync, mkdirSync, readFileSync, writeFileSync } from 'fs';
import { join } from 'path';

export interface ToyModelOptions {
  inputHw?: [number, number];
  inputChannels?: number;
  classes?: number;
  dropoutRate?: number;
}

/**
 * Small segmentation net with two decoder stages: dec1 at half resolution,
 * dec2 back at input resolution, then dropout, 1x1 logits, and softmax.
 * All initializers are seeded so a given seed always yields the same weights.
 */
export function buildToyModel(seed: number, opts: ToyModelOptions = {}): tf.LayersModel {
  const [h, w] = opts.inputHw ?? [16, 16];
  const cIn = opts.inputChannels ?? 1;
  const k = opts.classes ?? 3;
  const rate = opts.dropoutRate ?? 0.25;
  const init = (n: number) => tf.initializers.glorotUniform({ seed: seed + n });

  const input = tf.input({ shape: [h, w, cIn], name: 'section' });
  let x = tf.layers
    .conv2d({ filters: 8, kernelSize: 3, padding: 'same', activation: 'relu', kernelInitializer: init(1), name: 'enc1' })
    .apply(input) as tf.SymbolicTensor;
  x = tf.layers.maxPooling2d({ poolSize: 2, name: 'pool1' }).apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .conv2d({ filters: 12, kernelSize: 3, padding: 'same', activation: 'relu', kernelInitializer: init(2), name: 'bottleneck' })
    .apply(x) as tf.SymbolicTensor;
  const dec1 = tf.layers
    .conv2d({ filters: 6, kernelSize: 3, padding: 'same', activation: 'relu', kernelInitializer: init(3), name: 'dec1' })
    .apply(x) as tf.SymbolicTensor;
  const up1 = tf.layers.upSampling2d({ size: [2, 2], name: 'up1' }).apply(dec1) as tf.SymbolicTensor;
  const dec2 = tf.layers
    .conv2d({ filters: 4, kernelSize: 3, padding: 'same', activation: 'relu', kernelInitializer: init(4), name: 'dec2' })
    .apply(up1) as tf.SymbolicTensor;
  const drop = tf.layers.dropout({ rate, name: 'drop' }).apply(dec2) as tf.SymbolicTensor;
  // softmax lives in the conv activation: the standalone Softmax layer
  // picks axis 1 on rank-4 input, which the cpu backend refuses
  const probs = tf.layers
    .conv2d({ filters: k, kernelSize: 1, activation: 'softmax', kernelInitializer: init(5), name: 'probs' })
    .apply(drop) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: probs, name: 'toy_seg' });
}

function collectWeightData(data: ArrayBuffer | ArrayBuffer[] | undefined): Buffer {
  if (data == null) {
    throw new Error('model save produced no weight data');
  }
  const parts = Array.isArray(data) ? data : [data];
  return Buffer.concat(parts.map((p) => Buffer.from(p)));
}

export async function saveModelToDir(model: tf.LayersModel, dir: string): Promise<void> {
  mkdirSync(dir, { recursive: true });
  await model.save({
    save: async (artifacts: tf.io.ModelArtifacts) => {
      writeFileSync(join(dir, 'weights.bin'), collectWeightData(artifacts.weightData as ArrayBuffer | ArrayBuffer[]));
      const json = {
        modelTopology: artifacts.modelTopology,
        format: 'layers-model',
        generatedBy: 'radmi-exporter',
        convertedBy: null,
        weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs ?? [] }],
      };
      writeFileSync(join(dir, 'model.json'), JSON.stringify(json));
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' as const } };
    },
  });
}

export async function loadModelFromDir(dir: string): Promise<tf.LayersModel> {
  const modelPath = join(dir, 'model.json');
  if (!existsSync(modelPath)) {
    throw new Error(`checkpoint not found: no model.json under ${dir}`);
  }
  const json = JSON.parse(readFileSync(modelPath, 'utf8'));
  const groups: Array<{ paths: string[]; weights: tf.io.WeightsManifestEntry[] }> = json.weightsManifest ?? [];
  const buffers: Buffer[] = [];
  const specs: tf.io.WeightsManifestEntry[] = [];
  for (const group of groups) {
    for (const rel of group.paths) {
      buffers.push(readFileSync(join(dir, rel)));
    }
    specs.push(...group.weights);
  }
  const weights = Buffer.concat(buffers);
  const weightData = weights.buffer.slice(weights.byteOffset, weights.byteOffset + weights.byteLength);
  return tf.loadLayersModel({
    load: async () => ({ modelTopology: json.modelTopology, weightSpecs: specs, weightData }),
  });
}

/** Cross-validated training of the multi-scale maxout network on exported
 * feature grids, with per-graph majority-vote evaluation. */
import * as tf from "@tensorflow/tfjs";

import { Fold, Sample, graphFolds, rng, shuffled } from "./data.js";
import { buildNetwork, checkInputShape } from "./msm.js";

export interface TrainConfig {
  folds?: number;
  epochs?: number;
  batchSize?: number;
  learningRate?: number;
  dropout?: number;
  seed?: number;
  channelsPerStage?: [number, number, number];
  patience?: number;
  verbose?: boolean;
}

export interface CvResult {
  fold_accuracies: number[];
  per_tensor_accuracies: number[];
  mean: number;
  std: number;
  config: Required<Omit<TrainConfig, "verbose">>;
}

function toTensor(samples: Sample[], idx: number[]): tf.Tensor4D {
  const [h, w, c] = samples[0].tensor.shape;
  const out = new Float32Array(idx.length * h * w * c);
  idx.forEach((i, k) => out.set(samples[i].tensor.data, k * h * w * c));
  return tf.tensor4d(out, [idx.length, h, w, c]);
}

function toLabels(samples: Sample[], idx: number[], numClasses: number): tf.Tensor2D {
  const out = new Float32Array(idx.length * numClasses);
  idx.forEach((i, k) => {
    out[k * numClasses + samples[i].label] = 1;
  });
  return tf.tensor2d(out, [idx.length, numClasses]);
}

/** Split train indices again at graph level to get an early-stopping
 * validation slice (about 10% of the training graphs). */
function validationSplit(
  samples: Sample[], trainIdx: number[], seed: number,
): { fit: number[]; val: number[] } {
  const graphs = [...new Set(trainIdx.map((i) => samples[i].graphId))].sort();
  const valCount = Math.max(1, Math.floor(graphs.length / 10));
  const valGraphs = new Set(shuffled(graphs, rng(seed ^ 0x5f5e1)).slice(0, valCount));
  const fit: number[] = [];
  const val: number[] = [];
  for (const i of trainIdx) {
    (valGraphs.has(samples[i].graphId) ? val : fit).push(i);
  }
  return { fit, val };
}

export async function trainEvalCv(
  samples: Sample[], cfg: TrainConfig = {},
): Promise<CvResult> {
  const folds = cfg.folds ?? 10;
  const epochs = cfg.epochs ?? 100;
  const batchSize = cfg.batchSize ?? 10;
  const learningRate = cfg.learningRate ?? 1e-4;
  const dropout = cfg.dropout ?? 0.3;
  const seed = cfg.seed ?? 0;
  const patience = cfg.patience ?? 10;
  const channelsPerStage = cfg.channelsPerStage ?? ([64, 128, 256] as [number, number, number]);

  checkInputShape(samples[0].tensor.shape);
  const numClasses = Math.max(...samples.map((s) => s.label)) + 1;
  const foldPlan: Fold[] = graphFolds(samples, folds, seed);

  const foldAccuracies: number[] = [];
  const perTensorAccuracies: number[] = [];
  for (let f = 0; f < foldPlan.length; f++) {
    const { trainIdx, testIdx } = foldPlan[f];
    const { fit, val } = validationSplit(samples, trainIdx, seed + f);

    const model = buildNetwork({
      channelsPerStage,
      numClasses,
      inputChannels: samples[0].tensor.shape[2],
      dropout,
      seed: seed + 1000 * (f + 1),
    });
    model.compile({
      optimizer: tf.train.adam(learningRate),
      loss: "categoricalCrossentropy",
      metrics: ["accuracy"],
    });

    const xs = toTensor(samples, fit);
    const ys = toLabels(samples, fit, numClasses);
    const xVal = toTensor(samples, val);
    const yVal = toLabels(samples, val, numClasses);
    await model.fit(xs, ys, {
      epochs,
      batchSize,
      shuffle: true,
      validationData: [xVal, yVal],
      callbacks: [tf.callbacks.earlyStopping({ monitor: "val_loss", patience })],
      verbose: 0,
    });
    xs.dispose(); ys.dispose(); xVal.dispose(); yVal.dispose();

    const xTest = toTensor(samples, testIdx);
    const probs = model.predict(xTest) as tf.Tensor2D;
    const pred = (await probs.argMax(1).data()) as Int32Array;
    const probData = (await probs.data()) as Float32Array;
    xTest.dispose(); probs.dispose();

    let tensorHits = 0;
    const votes = new Map<string, Float64Array>();
    testIdx.forEach((i, k) => {
      if (pred[k] === samples[i].label) tensorHits++;
      let v = votes.get(samples[i].graphId);
      if (!v) {
        v = new Float64Array(numClasses);
        votes.set(samples[i].graphId, v);
      }
      for (let c = 0; c < numClasses; c++) v[c] += probData[k * numClasses + c];
    });
    let graphHits = 0;
    for (const [graphId, v] of votes) {
      let best = 0;
      for (let c = 1; c < numClasses; c++) if (v[c] > v[best]) best = c;
      const truth = samples[testIdx.find((i) => samples[i].graphId === graphId)!].label;
      if (best === truth) graphHits++;
    }
    foldAccuracies.push((100 * graphHits) / votes.size);
    perTensorAccuracies.push((100 * tensorHits) / testIdx.length);
    model.dispose();
    if (cfg.verbose) {
      console.log(
        `fold ${f + 1}/${foldPlan.length}: graph acc ${foldAccuracies[f].toFixed(2)}%, ` +
        `tensor acc ${perTensorAccuracies[f].toFixed(2)}%`,
      );
    }
  }

  const mean = foldAccuracies.reduce((a, b) => a + b, 0) / foldAccuracies.length;
  const variance =
    foldAccuracies.reduce((a, b) => a + (b - mean) ** 2, 0) / foldAccuracies.length;
  return {
    fold_accuracies: foldAccuracies,
    per_tensor_accuracies: perTensorAccuracies,
    mean,
    std: Math.sqrt(variance),
    config: {
      folds, epochs, batchSize, learningRate, dropout, seed,
      channelsPerStage, patience,
    },
  };
}

/** The multi-scale maxout network: each block runs a chain of three 3x3
 * convolutions, taps the chain after one, two, and three steps (receptive
 * fields 3x3, 5x5, 7x7), and fuses the taps with an elementwise max. */
import * as tf from "@tensorflow/tfjs";

export interface NetworkConfig {
  channelsPerStage?: [number, number, number];
  numClasses: number;
  inputChannels: number;
  dropout?: number;
  seed?: number;
}

export const INPUT_SIZE = 32;

export function msmConv(
  x: tf.SymbolicTensor,
  channels: number,
  name: string,
  seed: number,
): tf.SymbolicTensor {
  const conv = (input: tf.SymbolicTensor, k: number) =>
    tf.layers
      .conv2d({
        filters: channels,
        kernelSize: 3,
        padding: "same",
        activation: "relu",
        kernelInitializer: tf.initializers.glorotUniform({ seed: seed + k }),
        name: `${name}_scale${k}`,
      })
      .apply(input) as tf.SymbolicTensor;
  const tap1 = conv(x, 1);
  const tap2 = conv(tap1, 2);
  const tap3 = conv(tap2, 3);
  return tf.layers.maximum({ name: `${name}_max` }).apply([tap1, tap2, tap3]) as tf.SymbolicTensor;
}

export function buildNetwork(cfg: NetworkConfig): tf.LayersModel {
  const stages = cfg.channelsPerStage ?? [64, 128, 256];
  const dropout = cfg.dropout ?? 0.3;
  const seed = cfg.seed ?? 7;
  const input = tf.input({ shape: [INPUT_SIZE, INPUT_SIZE, cfg.inputChannels] });
  let x = msmConv(input, stages[0], "block1", seed);
  x = tf.layers.maxPooling2d({ poolSize: 2 }).apply(x) as tf.SymbolicTensor;
  x = msmConv(x, stages[1], "block2", seed + 100);
  x = tf.layers.maxPooling2d({ poolSize: 2 }).apply(x) as tf.SymbolicTensor;
  x = msmConv(x, stages[2], "block3", seed + 200);
  x = tf.layers.globalMaxPooling2d({}).apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .dense({ units: 256, activation: "relu",
             kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 300 }) })
    .apply(x) as tf.SymbolicTensor;
  x = tf.layers.dropout({ rate: dropout, seed: seed + 301 }).apply(x) as tf.SymbolicTensor;
  x = tf.layers
    .dense({ units: 128, activation: "relu",
             kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 400 }) })
    .apply(x) as tf.SymbolicTensor;
  x = tf.layers.dropout({ rate: dropout, seed: seed + 401 }).apply(x) as tf.SymbolicTensor;
  const logits = tf.layers
    .dense({ units: cfg.numClasses, activation: "softmax",
             kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 500 }) })
    .apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: logits });
}

export function parameterCount(model: tf.LayersModel): number {
  return model.countParams();
}

/** Guard used by the trainer: exported tensors must match the fixed window. */
export function checkInputShape(shape: number[]): void {
  if (shape.length !== 3 || shape[0] !== INPUT_SIZE || shape[1] !== INPUT_SIZE) {
    throw new Error(
      `expected ${INPUT_SIZE}x${INPUT_SIZE}xC input tensors, got [${shape.join(", ")}]`,
    );
  }
}

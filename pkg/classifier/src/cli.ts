/** Train the multi-scale maxout classifier on a directory of exported
 * feature grids and write a results JSON.
 *
 * Usage: node dist/cli.js <export-dir> [--epochs N] [--folds K] [--seed S]
 *        [--out results.json] [--shuffle-labels] [--quick]
 */
import * as fs from "fs";

import { loadExportDir, normalizeLabels, rng, shuffled } from "./data.js";
import { trainEvalCv } from "./train.js";

function arg(name: string, fallback: string | null = null): string | null {
  const i = process.argv.indexOf(name);
  return i >= 0 && i + 1 < process.argv.length ? process.argv[i + 1] : fallback;
}

async function main(): Promise<void> {
  const dir = process.argv[2];
  if (!dir || dir.startsWith("--")) {
    console.error("usage: node dist/cli.js <export-dir> [--epochs N] [--folds K] " +
                  "[--seed S] [--out results.json] [--shuffle-labels] [--quick]");
    process.exit(2);
  }
  const epochs = parseInt(arg("--epochs", "100")!, 10);
  const folds = parseInt(arg("--folds", "10")!, 10);
  const seed = parseInt(arg("--seed", "0")!, 10);
  const out = arg("--out", "results.json")!;
  const quick = process.argv.includes("--quick");
  const learningRate = parseFloat(arg("--lr", "1e-4")!);
  const batchSize = parseInt(arg("--batch", "10")!, 10);

  const samples = loadExportDir(dir);
  const { classes } = normalizeLabels(samples);
  console.log(`${samples.length} tensors, ${classes.length} classes from ${dir}`);

  if (process.argv.includes("--shuffle-labels")) {
    // Null experiment: destroys the label-feature relation, so accuracy
    // should land at chance level.
    const perm = shuffled(samples.map((s) => s.label), rng(seed ^ 0xdead));
    samples.forEach((s, i) => (s.label = perm[i]));
  }

  const result = await trainEvalCv(samples, {
    folds,
    epochs,
    seed,
    learningRate,
    batchSize,
    verbose: true,
    channelsPerStage: quick ? [8, 16, 32] : [64, 128, 256],
    patience: quick ? epochs : 10,
  });
  console.log(`mean accuracy ${result.mean.toFixed(2)}% +- ${result.std.toFixed(2)}%`);
  fs.writeFileSync(out, JSON.stringify(result, null, 2));
  console.log(`wrote ${out}`);
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});

/** Loading exported feature grids and splitting them into graph-level folds
 * (all augmented copies of a graph stay on one side of every split). */
import * as fs from "fs";
import * as path from "path";

import { NpyArray, Sidecar, parseNpy } from "./npy.js";

export interface Sample {
  graphId: string;
  seed: number;
  tensor: NpyArray;
  label: number;
}

/** Filenames follow `<dataset>_<graphid>_<seed>.npy` with a JSON sidecar. */
export function loadExportDir(dir: string): Sample[] {
  const samples: Sample[] = [];
  const files = fs.readdirSync(dir).filter((f) => f.endsWith(".npy")).sort();
  if (files.length === 0) throw new Error(`no .npy exports found in ${dir}`);
  for (const file of files) {
    const match = file.match(/^(.*)_(\d+)_(-?\d+)\.npy$/);
    if (!match) continue;
    const tensor = parseNpy(new Uint8Array(fs.readFileSync(path.join(dir, file))));
    const sidecarPath = path.join(dir, file.replace(/\.npy$/, ".json"));
    const sidecar = JSON.parse(fs.readFileSync(sidecarPath, "utf8")) as Sidecar;
    if (sidecar.graph_label === null || sidecar.graph_label === undefined) {
      throw new Error(`${file}: sidecar has no graph_label; cannot train`);
    }
    samples.push({
      graphId: `${match[1]}_${match[2]}`,
      seed: parseInt(match[3], 10),
      tensor,
      label: sidecar.graph_label,
    });
  }
  if (samples.length === 0) throw new Error(`no parseable exports in ${dir}`);
  return samples;
}

/** Map arbitrary integer labels onto 0..k-1 (sorted order). */
export function normalizeLabels(samples: Sample[]): { classes: number[] } {
  const classes = [...new Set(samples.map((s) => s.label))].sort((a, b) => a - b);
  const index = new Map(classes.map((c, i) => [c, i]));
  for (const s of samples) s.label = index.get(s.label)!;
  return { classes };
}

/** Small deterministic PRNG for shuffles (mulberry32). */
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function shuffled<T>(items: T[], random: () => number): T[] {
  const out = items.slice();
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(random() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

export interface Fold {
  trainIdx: number[];
  testIdx: number[];
  testGraphs: string[];
}

/** Graph-level k-fold assignment: graphs are shuffled once, dealt round-robin
 * into folds, and every sample follows its graph. */
export function graphFolds(samples: Sample[], folds: number, seed: number): Fold[] {
  const graphIds = [...new Set(samples.map((s) => s.graphId))].sort();
  if (graphIds.length < folds) {
    throw new Error(`need at least ${folds} graphs for ${folds}-fold splitting`);
  }
  const order = shuffled(graphIds, rng(seed));
  const foldOfGraph = new Map<string, number>();
  order.forEach((g, i) => foldOfGraph.set(g, i % folds));

  const result: Fold[] = [];
  for (let f = 0; f < folds; f++) {
    const trainIdx: number[] = [];
    const testIdx: number[] = [];
    samples.forEach((s, i) => {
      (foldOfGraph.get(s.graphId) === f ? testIdx : trainIdx).push(i);
    });
    const trainGraphs = new Set(trainIdx.map((i) => samples[i].graphId));
    const testGraphs = new Set(testIdx.map((i) => samples[i].graphId));
    for (const g of testGraphs) {
      if (trainGraphs.has(g)) {
        throw new Error(`fold leakage: graph ${g} appears in both train and test`);
      }
    }
    result.push({ trainIdx, testIdx, testGraphs: [...testGraphs].sort() });
  }
  return result;
}

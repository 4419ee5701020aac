/** Reader/writer for the NPY v1.0 tensors produced by the layout exporter
 * (little-endian float32, C order) plus its JSON sidecar schema. */

export interface NpyArray {
  shape: number[];
  data: Float32Array;
}

export interface Sidecar {
  mask_rle: number[];
  assignment: number[][];
  pooled_cells: number[][];
  graph_label: number | null;
}

const MAGIC = [0x93, 0x4e, 0x55, 0x4d, 0x50, 0x59]; // \x93NUMPY

export function parseNpy(raw: Uint8Array): NpyArray {
  for (let i = 0; i < MAGIC.length; i++) {
    if (raw[i] !== MAGIC[i]) throw new Error("not an NPY file");
  }
  if (raw[6] !== 1 || raw[7] !== 0) {
    throw new Error(`unsupported NPY version ${raw[6]}.${raw[7]}`);
  }
  const headerLen = raw[8] | (raw[9] << 8);
  const header = new TextDecoder("latin1").decode(raw.subarray(10, 10 + headerLen));
  if (!/'descr':\s*'<f4'/.test(header) || !/'fortran_order':\s*False/.test(header)) {
    throw new Error(`unsupported NPY layout: ${header.trim()}`);
  }
  const shapeMatch = header.match(/'shape':\s*\(([^)]*)\)/);
  if (!shapeMatch) throw new Error("NPY header has no shape");
  const shape = shapeMatch[1]
    .split(",")
    .map((t) => t.trim())
    .filter((t) => t.length > 0)
    .map((t) => parseInt(t, 10));
  const count = shape.reduce((a, b) => a * b, 1);
  const start = 10 + headerLen;
  if (raw.byteLength < start + 4 * count) throw new Error("truncated NPY payload");
  const body = raw.slice(start, start + 4 * count);
  return { shape, data: new Float32Array(body.buffer, body.byteOffset, count) };
}

export function writeNpy(arr: NpyArray): Uint8Array {
  let shape = arr.shape.join(", ");
  if (arr.shape.length === 1) shape += ",";
  let header = `{'descr': '<f4', 'fortran_order': False, 'shape': (${shape}), }`;
  const prefix = 10;
  const pad = (64 - ((prefix + header.length + 1) % 64)) % 64;
  header = header + " ".repeat(pad) + "\n";
  const out = new Uint8Array(prefix + header.length + 4 * arr.data.length);
  out.set(MAGIC, 0);
  out[6] = 1;
  out[7] = 0;
  out[8] = header.length & 0xff;
  out[9] = (header.length >> 8) & 0xff;
  out.set(new TextEncoder().encode(header), 10);
  out.set(new Uint8Array(arr.data.buffer, arr.data.byteOffset, 4 * arr.data.length),
          prefix + header.length);
  return out;
}

export function decodeMaskRle(runs: number[], height: number, width: number): boolean[] {
  const flat: boolean[] = new Array(height * width).fill(false);
  let pos = 0;
  let value = false;
  for (const run of runs) {
    for (let i = 0; i < run; i++) flat[pos++] = value;
    value = !value;
  }
  if (pos !== height * width) throw new Error("mask run lengths do not match shape");
  return flat;
}

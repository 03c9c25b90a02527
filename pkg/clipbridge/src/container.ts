/**
 * Binary tensor container ("NALN"): one tensor per file, little-endian.
 *
 * Layout: magic "NALN" | format version u32 | dtype tag u32 (1 = f32,
 * 2 = f64) | rank u32 | dims u64 each | row-major payload. Matches the
 * reader/writer on the python side byte for byte.
 */

import { promises as fs } from "node:fs";
import path from "node:path";

export const MAGIC = "NALN";
export const FORMAT_VERSION = 1;

const TAG_F32 = 1;
const TAG_F64 = 2;

export interface Tensor {
  shape: number[];
  data: Float64Array;
}

export function encodeTensor(data: Float64Array, shape: number[]): Buffer {
  const count = shape.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new Error(`shape [${shape}] needs ${count} scalars, got ${data.length}`);
  }
  for (const v of data) {
    if (!Number.isFinite(v)) {
      throw new Error("tensor contains non-finite values");
    }
  }
  const header = Buffer.alloc(16 + 8 * shape.length);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(TAG_F64, 8);
  header.writeUInt32LE(shape.length, 12);
  shape.forEach((dim, i) => header.writeBigUInt64LE(BigInt(dim), 16 + 8 * i));
  const payload = Buffer.alloc(8 * data.length);
  data.forEach((v, i) => payload.writeDoubleLE(v, 8 * i));
  return Buffer.concat([header, payload]);
}

export function decodeTensor(blob: Buffer): Tensor {
  if (blob.length < 4 || blob.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error("not a tensor container (bad magic)");
  }
  if (blob.length < 16) {
    throw new Error("header cut short");
  }
  const version = blob.readUInt32LE(4);
  if (version !== FORMAT_VERSION) {
    throw new Error(`format version ${version}, expected ${FORMAT_VERSION}`);
  }
  const tag = blob.readUInt32LE(8);
  if (tag !== TAG_F32 && tag !== TAG_F64) {
    throw new Error(`unknown dtype tag ${tag}`);
  }
  const rank = blob.readUInt32LE(12);
  if (blob.length < 16 + 8 * rank) {
    throw new Error("dimension list cut short");
  }
  const shape: number[] = [];
  for (let i = 0; i < rank; i++) {
    shape.push(Number(blob.readBigUInt64LE(16 + 8 * i)));
  }
  const count = shape.reduce((a, b) => a * b, 1);
  const itemSize = tag === TAG_F32 ? 4 : 8;
  const offset = 16 + 8 * rank;
  if (blob.length - offset < count * itemSize) {
    throw new Error(`payload holds ${blob.length - offset} bytes, need ${count * itemSize}`);
  }
  if (blob.length - offset > count * itemSize) {
    throw new Error("trailing bytes after payload");
  }
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = tag === TAG_F32
      ? blob.readFloatLE(offset + 4 * i)
      : blob.readDoubleLE(offset + 8 * i);
    if (!Number.isFinite(data[i])) {
      throw new Error("payload contains NaN or Inf");
    }
  }
  return { shape, data };
}

/** Write atomically (temp file + rename) as the python side does. */
export async function writeTensor(filePath: string, data: Float64Array, shape: number[]): Promise<void> {
  await fs.mkdir(path.dirname(filePath), { recursive: true });
  const tmp = `${filePath}.tmp`;
  await fs.writeFile(tmp, encodeTensor(data, shape));
  await fs.rename(tmp, filePath);
}

export async function readTensor(filePath: string): Promise<Tensor> {
  return decodeTensor(await fs.readFile(filePath));
}

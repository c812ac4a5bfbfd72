/**
 * Bundle file writers, bit-exact against the consumer's loader.
 *
 * Embedding files: magic "LEXE", u32 version (=1), u32 row count, u32 dim,
 * then row-major float32 — all little-endian.  Rows must arrive normalized;
 * the writer refuses rows whose L2 norm strays from 1 so downstream loads
 * stay warning-free.  All writes are atomic (temp file, then rename).
 */

import { promises as fs } from "node:fs";
import * as path from "node:path";

export const EMBEDDINGS_MAGIC = "LEXE";
export const EMBEDDINGS_VERSION = 1;
export const NORM_TOL = 1e-5;

export function normalize(row: Float32Array): Float32Array {
  let sq = 0;
  for (let i = 0; i < row.length; i++) sq += row[i] * row[i];
  const norm = Math.sqrt(sq);
  if (norm === 0) throw new Error("cannot normalize a zero embedding");
  const out = new Float32Array(row.length);
  for (let i = 0; i < row.length; i++) out[i] = row[i] / norm;
  return out;
}

export function encodeEmbeddingsFile(rows: Float32Array[], dim: number): Buffer {
  for (const [i, row] of rows.entries()) {
    if (row.length !== dim) {
      throw new Error(`row ${i} has dimension ${row.length}, expected ${dim}`);
    }
    let sq = 0;
    for (let k = 0; k < dim; k++) sq += row[k] * row[k];
    if (Math.abs(Math.sqrt(sq) - 1) > NORM_TOL) {
      throw new Error(`row ${i} is not unit-norm (|v| = ${Math.sqrt(sq)})`);
    }
  }
  const header = Buffer.alloc(16);
  header.write(EMBEDDINGS_MAGIC, 0, "ascii");
  header.writeUInt32LE(EMBEDDINGS_VERSION, 4);
  header.writeUInt32LE(rows.length, 8);
  header.writeUInt32LE(dim, 12);
  const body = Buffer.alloc(4 * rows.length * dim);
  rows.forEach((row, i) => {
    for (let k = 0; k < dim; k++) body.writeFloatLE(row[k], (i * dim + k) * 4);
  });
  return Buffer.concat([header, body]);
}

export async function writeAtomic(target: string, data: Buffer | string): Promise<void> {
  await fs.mkdir(path.dirname(target), { recursive: true });
  const tmp = `${target}.tmp-${process.pid}`;
  await fs.writeFile(tmp, data);
  await fs.rename(tmp, target);
}

export async function writeEmbeddings(
  target: string,
  rows: Float32Array[],
  dim: number,
): Promise<void> {
  await writeAtomic(target, encodeEmbeddingsFile(rows, dim));
}

export interface PromptEntry {
  label: string;
  text: string;
  row: number;
}

export function encodePromptsFile(entries: PromptEntry[]): string {
  return JSON.stringify({ version: 1, entries }, null, 1) + "\n";
}

export interface KeyframeStub {
  id: number;
  t: number;
  embedding_row: number;
  source: string;
}

export function encodeStubsFile(stubs: KeyframeStub[]): string {
  return stubs.map((s) => JSON.stringify(s)).join("\n") + "\n";
}

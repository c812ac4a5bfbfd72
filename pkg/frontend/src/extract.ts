/**
 * Extraction core: run an encoder over an image directory or a prompt list
 * and emit the bundle-format files the mapping engine loads directly.
 */

import { promises as fs } from "node:fs";
import * as path from "node:path";
import { createEncoder, SUPPORTED_MODELS } from "./encoders.js";
import {
  encodePromptsFile,
  encodeStubsFile,
  KeyframeStub,
  PromptEntry,
  writeAtomic,
  writeEmbeddings,
} from "./format.js";

export interface ImageItem {
  file: string;
  stamp: number;
}

export interface ExtractionManifest {
  model: string;
  images: ImageItem[];
  template: string;
  dim: number;
}

export const DEFAULT_TEMPLATE = "a photo of a {label}";

export function validateManifest(m: ExtractionManifest): void {
  if (!SUPPORTED_MODELS.includes(m.model)) {
    throw new Error(`model ${m.model} is not in the supported list`);
  }
  const enc = createEncoder(m.model);
  if (m.dim !== enc.dim) {
    throw new Error(`manifest dim ${m.dim} does not match ${m.model} width ${enc.dim}`);
  }
  const stamps = m.images.map((i) => i.stamp);
  for (let i = 1; i < stamps.length; i++) {
    if (stamps[i] <= stamps[i - 1]) {
      throw new Error("image timestamps must strictly increase");
    }
  }
}

/** Images sorted into row order: timestamp ascending, filename as tiebreak. */
export async function listImages(dir: string): Promise<ImageItem[]> {
  const entries = (await fs.readdir(dir)).filter((f) => f.toLowerCase().endsWith(".png"));
  entries.sort();
  if (entries.length === 0) throw new Error(`no .png images under ${dir}`);

  let stamps: Record<string, number> | null = null;
  const stampFile = path.join(dir, "timestamps.json");
  try {
    stamps = JSON.parse(await fs.readFile(stampFile, "utf-8"));
  } catch {
    stamps = null; // fall back to index order
  }
  const items = entries.map((file, i) => ({
    file: path.join(dir, file),
    stamp: stamps ? stamps[file] : i * 1.0,
  }));
  for (const it of items) {
    if (it.stamp === undefined || Number.isNaN(it.stamp)) {
      throw new Error(`timestamps.json is missing an entry for ${path.basename(it.file)}`);
    }
  }
  items.sort((a, b) => a.stamp - b.stamp || a.file.localeCompare(b.file));
  return items;
}

export interface ImageResult {
  rows: number;
  dim: number;
  embeddingsPath: string;
  stubsPath: string;
}

export async function encodeImages(
  manifest: ExtractionManifest,
  outDir: string,
): Promise<ImageResult> {
  validateManifest(manifest);
  const encoder = createEncoder(manifest.model);
  const rows: Float32Array[] = [];
  const stubs: KeyframeStub[] = [];
  for (const [i, item] of manifest.images.entries()) {
    let data: Buffer;
    try {
      data = await fs.readFile(item.file);
    } catch (err) {
      throw new Error(`cannot read image ${item.file}: ${(err as Error).message}`);
    }
    rows.push(await encoder.encodeImage(data));
    stubs.push({ id: i, t: item.stamp, embedding_row: i, source: path.basename(item.file) });
  }
  const embeddingsPath = path.join(outDir, "embeddings.bin");
  const stubsPath = path.join(outDir, "keyframe_stubs.jsonl");
  await writeEmbeddings(embeddingsPath, rows, encoder.dim);
  await writeAtomic(stubsPath, encodeStubsFile(stubs));
  return { rows: rows.length, dim: encoder.dim, embeddingsPath, stubsPath };
}

export interface PromptResult {
  rows: number;
  dim: number;
  embeddingsPath: string;
  promptsPath: string;
}

export async function encodePrompts(
  labels: string[],
  template: string,
  model: string,
  outDir: string,
): Promise<PromptResult> {
  if (labels.length === 0) throw new Error("label list is empty");
  const normalized = labels.map((l) => l.trim().toLowerCase()).filter((l) => l.length > 0);
  const seen = new Set<string>();
  for (const label of normalized) {
    if (seen.has(label)) throw new Error(`duplicate label ${JSON.stringify(label)}`);
    seen.add(label);
  }
  const encoder = createEncoder(model);
  const rows: Float32Array[] = [];
  const entries: PromptEntry[] = [];
  for (const [i, label] of normalized.entries()) {
    const text = template.replaceAll("{label}", label);
    rows.push(await encoder.encodeText(text));
    entries.push({ label, text, row: i });
  }
  const embeddingsPath = path.join(outDir, "text_embeddings.bin");
  const promptsPath = path.join(outDir, "prompts.json");
  await writeEmbeddings(embeddingsPath, rows, encoder.dim);
  await writeAtomic(promptsPath, encodePromptsFile(entries));
  return { rows: rows.length, dim: encoder.dim, embeddingsPath, promptsPath };
}

export async function readLabelsFile(file: string): Promise<string[]> {
  const raw = await fs.readFile(file, "utf-8");
  const trimmed = raw.trim();
  if (trimmed.startsWith("[")) return JSON.parse(trimmed) as string[];
  return trimmed
    .split("\n")
    .map((l) => l.trim())
    .filter((l) => l.length > 0 && !l.startsWith("#"));
}

/**
 * Release checks for the extractor: its files must load warning-free through
 * the mapping engine's own bundle loader, rows must be unit-norm, and on a
 * small labeled image sample the top-1 prompt must match the folder label
 * for most images.
 */

import { readFileSync, writeFileSync } from "node:fs";
import * as path from "node:path";
import { describe, expect, it } from "vitest";
import { createEncoder, TINY_DIM } from "../src/encoders.js";
import { DEFAULT_TEMPLATE, encodeImages, encodePrompts, listImages } from "../src/extract.js";
import { loadBundleWarnings, tempDir, writeSampleImages } from "./helpers.js";

const MODEL = "tiny-patch16";
const LABELS = ["red", "green", "blue", "yellow"];

async function extractSample() {
  const imgDir = tempDir("sample-");
  const perLabel = { red: 3, green: 3, blue: 2, yellow: 2 }; // 10 images
  const files = writeSampleImages(imgDir, perLabel);
  const out = tempDir("bundle-");

  const items: { file: string; stamp: number }[] = [];
  const truth: string[] = [];
  let t = 0;
  for (const label of LABELS) {
    for (const file of files[label] ?? []) {
      items.push({ file, stamp: t });
      truth.push(label);
      t += 1.0;
    }
  }
  const imgResult = await encodeImages(
    { model: MODEL, images: items, template: DEFAULT_TEMPLATE, dim: TINY_DIM },
    out,
  );
  const promptResult = await encodePrompts(
    LABELS,
    "a photo of a {label} room",
    MODEL,
    out,
  );
  return { out, truth, imgResult, promptResult };
}

function readRows(file: string): Float32Array[] {
  const buf = readFileSync(file);
  const count = buf.readUInt32LE(8);
  const dim = buf.readUInt32LE(12);
  const rows: Float32Array[] = [];
  for (let i = 0; i < count; i++) {
    const row = new Float32Array(dim);
    for (let k = 0; k < dim; k++) row[k] = buf.readFloatLE(16 + 4 * (i * dim + k));
    rows.push(row);
  }
  return rows;
}

describe("extractor acceptance", () => {
  it("rows are unit-norm within 1e-5", async () => {
    const { out } = await extractSample();
    for (const file of ["embeddings.bin", "text_embeddings.bin"]) {
      for (const row of readRows(path.join(out, file))) {
        const norm = Math.sqrt(Array.from(row).reduce((s, v) => s + v * v, 0));
        expect(Math.abs(norm - 1)).toBeLessThan(1e-5);
      }
    }
  });

  it("top-1 prompt matches the folder label for at least 7 of 10 images", async () => {
    const { out, truth } = await extractSample();
    const images = readRows(path.join(out, "embeddings.bin"));
    const texts = readRows(path.join(out, "text_embeddings.bin"));
    const prompts = JSON.parse(readFileSync(path.join(out, "prompts.json"), "utf-8"));
    let correct = 0;
    images.forEach((img, i) => {
      let best = -Infinity;
      let bestLabel = "";
      for (const entry of prompts.entries) {
        const text = texts[entry.row];
        let dot = 0;
        for (let k = 0; k < img.length; k++) dot += img[k] * text[k];
        if (dot > best) {
          best = dot;
          bestLabel = entry.label;
        }
      }
      if (bestLabel === truth[i]) correct += 1;
    });
    expect(truth.length).toBe(10);
    expect(correct).toBeGreaterThanOrEqual(7);
  });

  it("outputs pass the consumer's load_bundle with zero warnings", async () => {
    const { out } = await extractSample();
    // complete the bundle the documented way: merge the stubs with an
    // odometry stream into keyframes.jsonl, and provide intrinsics
    const stubs = readFileSync(path.join(out, "keyframe_stubs.jsonl"), "utf-8")
      .trim()
      .split("\n")
      .map((l) => JSON.parse(l));
    const keyframes = stubs
      .map((s, i) =>
        JSON.stringify({
          id: s.id,
          t: s.t,
          pose: [i * 0.75, 0, 0, 0, 0, 0, 1],
          embedding_row: s.embedding_row,
        }),
      )
      .join("\n");
    writeFileSync(path.join(out, "keyframes.jsonl"), keyframes + "\n");
    writeFileSync(
      path.join(out, "camera.json"),
      JSON.stringify({ fx: 320, fy: 320, cx: 320, cy: 240, width: 640, height: 480 }),
    );
    expect(loadBundleWarnings(out)).toBe(0);
  });

  it("the consumer's classifier reads the same top-1 labels", async () => {
    const { out, truth } = await extractSample();
    const script = [
      "import sys, json",
      "from roomslam.bundle import read_embeddings",
      "from roomslam.semantics import EmbeddingBank, PromptBank, PromptEntry, classify",
      "root = sys.argv[1]",
      "images = EmbeddingBank(read_embeddings(root + '/embeddings.bin'))",
      "texts = EmbeddingBank(read_embeddings(root + '/text_embeddings.bin'))",
      "pj = json.load(open(root + '/prompts.json'))",
      "prompts = PromptBank([PromptEntry(e['label'], e['text'], e['row']) for e in pj['entries']], texts)",
      "print(json.dumps([classify(i, images, prompts)[0] for i in range(len(images))]))",
    ].join("\n");
    const { execFileSync } = await import("node:child_process");
    const labels = JSON.parse(
      execFileSync("python3", ["-c", script, out], { encoding: "utf-8" }),
    ) as string[];
    expect(labels.length).toBe(truth.length);
    const agree = labels.filter((l, i) => l === truth[i]).length;
    expect(agree).toBeGreaterThanOrEqual(7);
  });
});

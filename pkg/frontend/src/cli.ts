#!/usr/bin/env node
/**
 * extract images  --dir D --out O [--model M]
 * extract prompts --labels FILE [--template T] [--model M] --out O
 *
 * Emits embeddings.bin / text_embeddings.bin / prompts.json in the exact
 * dataset-bundle format, plus keyframe_stubs.jsonl for merging with an
 * odometry stream.
 */

import { createEncoder, SUPPORTED_MODELS } from "./encoders.js";
import {
  DEFAULT_TEMPLATE,
  encodeImages,
  encodePrompts,
  listImages,
  readLabelsFile,
} from "./extract.js";

const DEFAULT_MODEL = "clip-vit-l14";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got ${JSON.stringify(argv)}`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

function usage(): string {
  return [
    "usage:",
    "  extract images  --dir DIR --out DIR [--model NAME]",
    "  extract prompts --labels FILE --out DIR [--template T] [--model NAME]",
    `models: ${SUPPORTED_MODELS.join(", ")} (default ${DEFAULT_MODEL})`,
  ].join("\n");
}

async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  if (command !== "images" && command !== "prompts") {
    console.error(usage());
    return 2;
  }
  const flags = parseFlags(rest);
  const model = flags.get("model") ?? DEFAULT_MODEL;

  if (command === "images") {
    const dir = flags.get("dir");
    const out = flags.get("out");
    if (!dir || !out) {
      console.error(usage());
      return 2;
    }
    const images = await listImages(dir);
    const encoder = createEncoder(model);
    const result = await encodeImages(
      { model, images, template: DEFAULT_TEMPLATE, dim: encoder.dim },
      out,
    );
    console.log(JSON.stringify({ command: "images", model, ...result }));
    return 0;
  }

  const labelsFile = flags.get("labels");
  const out = flags.get("out");
  if (!labelsFile || !out) {
    console.error(usage());
    return 2;
  }
  const labels = await readLabelsFile(labelsFile);
  const template = flags.get("template") ?? DEFAULT_TEMPLATE;
  const result = await encodePrompts(labels, template, model, out);
  console.log(JSON.stringify({ command: "prompts", model, template, ...result }));
  return 0;
}

main(process.argv.slice(2)).then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${(err as Error).message}`);
    process.exit(1);
  },
);

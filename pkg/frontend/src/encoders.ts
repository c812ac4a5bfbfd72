/**
 * Encoder registry.
 *
 * Real models are the CLIP ViT family served through @xenova/transformers
 * (loaded lazily; weights download on first use).  `tiny-patch16` is a
 * deterministic reference encoder that embeds images by a coarse color-grid
 * signature and text by a small color-word lexicon projected into the same
 * space; it runs fully offline and is what the test-suite exercises.
 */

import { PNG } from "pngjs";
import { normalize } from "./format.js";

export interface Encoder {
  readonly name: string;
  readonly dim: number;
  encodeImage(pngData: Buffer): Promise<Float32Array>;
  encodeText(text: string): Promise<Float32Array>;
}

const GRID = 4; // tiny encoder: 4x4 cells x RGB
export const TINY_DIM = GRID * GRID * 3;

const COLOR_WORDS: Record<string, [number, number, number]> = {
  red: [1, 0, 0],
  green: [0, 1, 0],
  blue: [0, 0, 1],
  yellow: [1, 1, 0],
  magenta: [1, 0, 1],
  pink: [1, 0.4, 0.7],
  cyan: [0, 1, 1],
  white: [1, 1, 1],
  black: [0, 0, 0],
  gray: [0.5, 0.5, 0.5],
  grey: [0.5, 0.5, 0.5],
  orange: [1, 0.55, 0],
  purple: [0.55, 0, 0.85],
  brown: [0.55, 0.3, 0.1],
};

class TinyPatchEncoder implements Encoder {
  readonly name = "tiny-patch16";
  readonly dim = TINY_DIM;

  async encodeImage(pngData: Buffer): Promise<Float32Array> {
    const png = PNG.sync.read(pngData);
    const { width, height, data } = png;
    const sums = new Float64Array(TINY_DIM);
    const counts = new Float64Array(GRID * GRID);
    for (let y = 0; y < height; y++) {
      const gy = Math.min(GRID - 1, Math.floor((y * GRID) / height));
      for (let x = 0; x < width; x++) {
        const gx = Math.min(GRID - 1, Math.floor((x * GRID) / width));
        const cell = gy * GRID + gx;
        const px = (y * width + x) * 4;
        sums[cell * 3 + 0] += data[px + 0] / 255;
        sums[cell * 3 + 1] += data[px + 1] / 255;
        sums[cell * 3 + 2] += data[px + 2] / 255;
        counts[cell] += 1;
      }
    }
    const out = new Float32Array(TINY_DIM);
    for (let cell = 0; cell < GRID * GRID; cell++) {
      const n = counts[cell] || 1;
      out[cell * 3 + 0] = sums[cell * 3 + 0] / n;
      out[cell * 3 + 1] = sums[cell * 3 + 1] / n;
      out[cell * 3 + 2] = sums[cell * 3 + 2] / n;
    }
    return normalize(out);
  }

  async encodeText(text: string): Promise<Float32Array> {
    const words = text.toLowerCase().split(/[^a-z]+/);
    let rgb: [number, number, number] = [0.5, 0.5, 0.5];
    let hits = 0;
    const acc: [number, number, number] = [0, 0, 0];
    for (const w of words) {
      const c = COLOR_WORDS[w];
      if (c) {
        acc[0] += c[0];
        acc[1] += c[1];
        acc[2] += c[2];
        hits += 1;
      }
    }
    if (hits > 0) rgb = [acc[0] / hits, acc[1] / hits, acc[2] / hits];
    const out = new Float32Array(TINY_DIM);
    for (let cell = 0; cell < GRID * GRID; cell++) {
      out[cell * 3 + 0] = rgb[0];
      out[cell * 3 + 1] = rgb[1];
      out[cell * 3 + 2] = rgb[2];
    }
    return normalize(out);
  }
}

interface ClipSpec {
  hub: string;
  dim: number;
}

const CLIP_MODELS: Record<string, ClipSpec> = {
  "clip-vit-l14": { hub: "Xenova/clip-vit-large-patch14", dim: 768 },
  "clip-vit-b16": { hub: "Xenova/clip-vit-base-patch16", dim: 512 },
  "clip-vit-b32": { hub: "Xenova/clip-vit-base-patch32", dim: 512 },
};

class ClipEncoder implements Encoder {
  readonly name: string;
  readonly dim: number;
  private readonly hub: string;
  private pipeline: { image: any; text: any } | null = null;

  constructor(name: string, spec: ClipSpec) {
    this.name = name;
    this.dim = spec.dim;
    this.hub = spec.hub;
  }

  private async load() {
    if (this.pipeline) return this.pipeline;
    let mod: any;
    try {
      const moduleName = "@xenova/transformers"; // resolved at runtime only
      mod = await import(moduleName);
    } catch {
      throw new Error(
        `model ${this.name} needs the optional dependency @xenova/transformers; ` +
          "install it (and allow model downloads) or use tiny-patch16",
      );
    }
    const tokenizer = await mod.AutoTokenizer.from_pretrained(this.hub);
    const processor = await mod.AutoProcessor.from_pretrained(this.hub);
    const textModel = await mod.CLIPTextModelWithProjection.from_pretrained(this.hub, {
      quantized: true,
    });
    const visionModel = await mod.CLIPVisionModelWithProjection.from_pretrained(this.hub, {
      quantized: true,
    });
    this.pipeline = {
      image: async (buf: Buffer) => {
        const image = await mod.RawImage.fromBlob(new Blob([Uint8Array.from(buf)]));
        const inputs = await processor(image);
        const { image_embeds } = await visionModel(inputs);
        return Float32Array.from(image_embeds.data);
      },
      text: async (s: string) => {
        const inputs = tokenizer([s], { padding: true, truncation: true });
        const { text_embeds } = await textModel(inputs);
        return Float32Array.from(text_embeds.data);
      },
    };
    return this.pipeline;
  }

  async encodeImage(pngData: Buffer): Promise<Float32Array> {
    const p = await this.load();
    return normalize(await p.image(pngData));
  }

  async encodeText(text: string): Promise<Float32Array> {
    const p = await this.load();
    return normalize(await p.text(text));
  }
}

export const SUPPORTED_MODELS = ["tiny-patch16", ...Object.keys(CLIP_MODELS)];

export function createEncoder(model: string): Encoder {
  if (model === "tiny-patch16") return new TinyPatchEncoder();
  const spec = CLIP_MODELS[model];
  if (spec) return new ClipEncoder(model, spec);
  throw new Error(
    `unknown model ${JSON.stringify(model)}; supported: ${SUPPORTED_MODELS.join(", ")}`,
  );
}

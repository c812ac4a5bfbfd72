import { execFileSync } from "node:child_process";
import { mkdtempSync, writeFileSync, mkdirSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";
import { PNG } from "pngjs";

export function tempDir(prefix: string): string {
  return mkdtempSync(path.join(tmpdir(), prefix));
}

/** Deterministic synthetic photo: dominant color + gradient + hash noise. */
export function makePng(
  rgb: [number, number, number],
  seed: number,
  width = 64,
  height = 48,
): Buffer {
  const png = new PNG({ width, height });
  let state = (seed * 2654435761) >>> 0;
  const next = () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 4;
      const shade = 0.6 + 0.4 * (x / width); // lighting gradient
      png.data[i + 0] = Math.min(255, Math.round(255 * rgb[0] * shade + 40 * next()));
      png.data[i + 1] = Math.min(255, Math.round(255 * rgb[1] * shade + 40 * next()));
      png.data[i + 2] = Math.min(255, Math.round(255 * rgb[2] * shade + 40 * next()));
      png.data[i + 3] = 255;
    }
  }
  return PNG.sync.write(png);
}

export function writeSampleImages(
  dir: string,
  perLabel: Record<string, number>,
): Record<string, string[]> {
  const files: Record<string, string[]> = {};
  const palette: Record<string, [number, number, number]> = {
    red: [0.85, 0.1, 0.1],
    green: [0.1, 0.8, 0.15],
    blue: [0.1, 0.15, 0.85],
    yellow: [0.85, 0.8, 0.1],
  };
  let seed = 1;
  for (const [label, count] of Object.entries(perLabel)) {
    const sub = path.join(dir, label);
    mkdirSync(sub, { recursive: true });
    files[label] = [];
    for (let i = 0; i < count; i++) {
      const file = path.join(sub, `img${i}.png`);
      writeFileSync(file, makePng(palette[label], seed++));
      files[label].push(file);
    }
  }
  return files;
}

/** Validate a bundle directory through the consumer's own loader. */
export function loadBundleWarnings(bundleDir: string): number {
  const script = [
    "import sys",
    "from roomslam.bundle import load_bundle",
    "b = load_bundle(sys.argv[1])",
    "print(len(b.load_warnings))",
  ].join("\n");
  const out = execFileSync("python3", ["-c", script, bundleDir], {
    encoding: "utf-8",
  });
  return parseInt(out.trim(), 10);
}

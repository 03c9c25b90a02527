import { copyFileSync, mkdtempSync, readFileSync, readdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";
import { Jimp } from "jimp";
import { beforeAll, describe, expect, it } from "vitest";

import { readTensor } from "../src/container.js";
import { SeededProjectionEncoder } from "../src/encoders.js";
import { exportEmbeddings } from "../src/export.js";

const DIM = 64;

function tempDir(prefix: string): string {
  return mkdtempSync(path.join(tmpdir(), prefix));
}

async function makeImages(dir: string, count: number): Promise<void> {
  for (let i = 0; i < count; i++) {
    const image = new Jimp({ width: 20 + i, height: 16, color: 0x000000ff });
    for (let y = 0; y < image.bitmap.height; y++) {
      for (let x = 0; x < image.bitmap.width; x++) {
        // deterministic per-image pattern
        const r = (x * 7 + i * 31) % 256;
        const g = (y * 13 + i * 17) % 256;
        const b = (x * y + i) % 256;
        image.setPixelColor((r << 24 | g << 16 | b << 8 | 0xff) >>> 0, x, y);
      }
    }
    await image.write(path.join(dir, `img-${String(i).padStart(2, "0")}.png`) as `${string}.${string}`);
  }
}

function job(images: string, out: string, labelsPath?: string) {
  return { imageDir: images, outDir: out, model: "seeded-projection", dim: DIM, labelsPath };
}

describe("export job", () => {
  const images = tempDir("imgs-");
  beforeAll(async () => {
    await makeImages(images, 12);
  });

  it("exports >= 10 images into containers plus a manifest", async () => {
    const out = tempDir("out-");
    const result = await exportEmbeddings(job(images, out));
    expect(result.exported).toBe(12);
    expect(result.skipped).toEqual([]);

    const manifest = JSON.parse(readFileSync(result.manifestPath, "utf-8"));
    expect(manifest.embed_dim).toBe(DIM);
    expect(manifest.model).toContain("seeded-projection");
    expect(manifest.samples).toEqual([]);
    expect(manifest.stimuli).toHaveLength(12);
    for (const row of manifest.stimuli) {
      const tensor = await readTensor(path.join(out, row.embedding));
      expect(tensor.shape).toEqual([DIM]);
      const norm = Math.hypot(...tensor.data);
      expect(norm).toBeGreaterThan(0);
    }
  });

  it("re-export is byte-identical (deterministic)", async () => {
    const out1 = tempDir("out-");
    const out2 = tempDir("out-");
    await exportEmbeddings(job(images, out1));
    await exportEmbeddings(job(images, out2));
    const rel = (root: string) =>
      readdirSync(path.join(root, "embeddings")).sort().map((f) => `embeddings/${f}`);
    expect(rel(out1)).toEqual(rel(out2));
    for (const f of [...rel(out1), "manifest.json"]) {
      expect(readFileSync(path.join(out1, f))).toEqual(readFileSync(path.join(out2, f)));
    }
  });

  it("identical image content yields identical embeddings", async () => {
    const dir = tempDir("imgs-");
    await makeImages(dir, 1);
    copyFileSync(path.join(dir, "img-00.png"), path.join(dir, "img-99.png"));
    const out = tempDir("out-");
    await exportEmbeddings(job(dir, out));
    const manifest = JSON.parse(readFileSync(path.join(out, "manifest.json"), "utf-8"));
    const byId = Object.fromEntries(
      manifest.stimuli.map((r: any) => [r.stimulus_id, r.embedding]));
    const a = await readTensor(path.join(out, byId["img-00"]));
    const b = await readTensor(path.join(out, byId["img-99"]));
    expect(Array.from(a.data)).toEqual(Array.from(b.data));
  });

  it("self-similarity after normalization is 1.0 within 1e-6", async () => {
    const out = tempDir("out-");
    await exportEmbeddings(job(images, out));
    const manifest = JSON.parse(readFileSync(path.join(out, "manifest.json"), "utf-8"));
    for (const row of manifest.stimuli) {
      const { data } = await readTensor(path.join(out, row.embedding));
      const norm = Math.hypot(...data);
      const unit = Array.from(data, (v) => v / norm);
      const cosine = unit.reduce((acc, v) => acc + v * v, 0);
      expect(Math.abs(cosine - 1.0)).toBeLessThanOrEqual(1e-6);
    }
  });

  it("skips unreadable images with a warning but keeps exporting", async () => {
    const dir = tempDir("imgs-");
    await makeImages(dir, 3);
    writeFileSync(path.join(dir, "broken.png"), Buffer.from("this is not a png"));
    const out = tempDir("out-");
    const result = await exportEmbeddings(job(dir, out));
    expect(result.exported).toBe(3);
    expect(result.skipped).toHaveLength(1);
    expect(result.skipped[0]).toContain("broken.png");
  });

  it("fails when nothing can be exported", async () => {
    const dir = tempDir("imgs-");
    writeFileSync(path.join(dir, "broken.png"), Buffer.from("nope"));
    await expect(exportEmbeddings(job(dir, tempDir("out-")))).rejects.toThrow(/no images exported/);
  });

  it("applies class labels from a mapping file", async () => {
    const labels = tempDir("labels-");
    const labelsPath = path.join(labels, "labels.json");
    writeFileSync(labelsPath, JSON.stringify({ "img-00": "cat", "img-01": "dog" }));
    const out = tempDir("out-");
    await exportEmbeddings(job(images, out, labelsPath));
    const manifest = JSON.parse(readFileSync(path.join(out, "manifest.json"), "utf-8"));
    const byId = Object.fromEntries(
      manifest.stimuli.map((r: any) => [r.stimulus_id, r.class_label]));
    expect(byId["img-00"]).toBe("cat");
    expect(byId["img-01"]).toBe("dog");
    expect(byId["img-02"]).toBeNull();
  });

  it("disambiguates stimulus ids when stems collide", async () => {
    const dir = tempDir("imgs-");
    await makeImages(dir, 2);
    // same stem, different extension
    const img = await Jimp.read(path.join(dir, "img-00.png"));
    await img.write(path.join(dir, "img-00.bmp") as `${string}.${string}`);
    const out = tempDir("out-");
    const result = await exportEmbeddings(job(dir, out));
    const manifest = JSON.parse(readFileSync(path.join(out, "manifest.json"), "utf-8"));
    const ids = manifest.stimuli.map((r: any) => r.stimulus_id).sort();
    expect(result.exported).toBe(3);
    expect(new Set(ids).size).toBe(3);
    expect(ids).toContain("img-00.png");
    expect(ids).toContain("img-00.bmp");
    expect(ids).toContain("img-01");
  });

  it("encoder width matches the manifest embed_dim", async () => {
    const enc = new SeededProjectionEncoder(32);
    const out = tempDir("out-");
    const result = await exportEmbeddings(
      { imageDir: images, outDir: out, model: "ignored", dim: 32 }, enc);
    const manifest = JSON.parse(readFileSync(result.manifestPath, "utf-8"));
    expect(manifest.embed_dim).toBe(32);
    const first = await readTensor(path.join(out, manifest.stimuli[0].embedding));
    expect(first.shape).toEqual([32]);
  });
});

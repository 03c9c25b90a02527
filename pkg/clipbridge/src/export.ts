#!/usr/bin/env node
/**
 * Export job: run a frozen image encoder over every image in a directory and
 * write one embedding container per image plus a stimulus manifest, in the
 * formats the python side reads unchanged.
 *
 * Usage:
 *   node dist/export.js --images <dir> --out <dir>
 *       [--model Xenova/clip-vit-base-patch32 | seeded-projection]
 *       [--dim 512] [--labels labels.json]
 *
 * Unreadable images are listed and skipped (warning count in the summary);
 * exporting zero images is a failure. Embeddings are stored raw
 * (unnormalized); normalization happens downstream.
 */

import { promises as fs } from "node:fs";
import path from "node:path";
import process from "node:process";

import { Jimp } from "jimp";

import { writeTensor } from "./container.js";
import { DecodedImage, ImageEncoder, makeEncoder } from "./encoders.js";
import { StimulusRow, buildManifest, writeManifest } from "./manifest.js";

const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff"]);

export interface ExportJob {
  imageDir: string;
  outDir: string;
  model: string;
  dim: number;
  labelsPath?: string;
}

export interface ExportResult {
  manifestPath: string;
  exported: number;
  skipped: string[];
}

async function decodeImage(filePath: string): Promise<DecodedImage> {
  const image = await Jimp.read(filePath);
  const { width, height, data } = image.bitmap; // RGBA
  const rgb = new Uint8Array(width * height * 3);
  for (let p = 0; p < width * height; p++) {
    rgb[3 * p] = data[4 * p];
    rgb[3 * p + 1] = data[4 * p + 1];
    rgb[3 * p + 2] = data[4 * p + 2];
  }
  return { width, height, rgb };
}

async function listImages(dir: string): Promise<string[]> {
  const entries = await fs.readdir(dir, { withFileTypes: true });
  return entries
    .filter((e) => e.isFile() && IMAGE_EXTENSIONS.has(path.extname(e.name).toLowerCase()))
    .map((e) => e.name)
    .sort();
}

function stimulusIds(names: string[]): Map<string, string> {
  // file stem as the id; full file name when stems collide across extensions
  const stemCounts = new Map<string, number>();
  for (const name of names) {
    const stem = path.parse(name).name;
    stemCounts.set(stem, (stemCounts.get(stem) ?? 0) + 1);
  }
  const ids = new Map<string, string>();
  for (const name of names) {
    const stem = path.parse(name).name;
    ids.set(name, (stemCounts.get(stem) ?? 0) > 1 ? name : stem);
  }
  return ids;
}

async function loadLabels(labelsPath?: string): Promise<Record<string, string>> {
  if (!labelsPath) return {};
  return JSON.parse(await fs.readFile(labelsPath, "utf-8"));
}

function checkEmbedding(vec: Float64Array, dim: number, name: string): void {
  if (vec.length !== dim) {
    throw new Error(`${name}: embedding width ${vec.length} != expected ${dim}`);
  }
  let norm = 0;
  for (const v of vec) {
    if (!Number.isFinite(v)) throw new Error(`${name}: non-finite embedding`);
    norm += v * v;
  }
  if (!(norm > 0)) throw new Error(`${name}: zero-norm embedding`);
}

export async function exportEmbeddings(job: ExportJob,
                                       encoder?: ImageEncoder): Promise<ExportResult> {
  const enc = encoder ?? (await makeEncoder(job.model, job.dim));
  const labels = await loadLabels(job.labelsPath);
  const names = await listImages(job.imageDir);
  const ids = stimulusIds(names);

  const rows: StimulusRow[] = [];
  const skipped: string[] = [];
  let index = 0;
  for (const name of names) {
    const id = ids.get(name)!;
    let image: DecodedImage;
    try {
      image = await decodeImage(path.join(job.imageDir, name));
    } catch (err) {
      skipped.push(`${name}: ${(err as Error).message}`);
      continue;
    }
    const embedding = await enc.embed(image);
    checkEmbedding(embedding, enc.dim, name);
    const rel = `embeddings/e${String(index).padStart(5, "0")}.naln`;
    await writeTensor(path.join(job.outDir, rel), embedding, [enc.dim]);
    rows.push({
      stimulus_id: id,
      class_label: labels[id] ?? labels[name] ?? null,
      embedding: rel,
    });
    index++;
  }
  if (rows.length === 0) {
    throw new Error(
      `no images exported from ${job.imageDir}` +
      (skipped.length ? ` (${skipped.length} unreadable)` : ""));
  }
  const manifestPath = path.join(job.outDir, "manifest.json");
  await writeManifest(manifestPath, buildManifest(enc.dim, enc.id, rows));
  return { manifestPath, exported: rows.length, skipped };
}

function parseArgs(argv: string[]): ExportJob {
  const job: ExportJob = {
    imageDir: "",
    outDir: "",
    model: "Xenova/clip-vit-base-patch32",
    dim: 512,
  };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const value = argv[i + 1];
    switch (flag) {
      case "--images": job.imageDir = value; i++; break;
      case "--out": job.outDir = value; i++; break;
      case "--model": job.model = value; i++; break;
      case "--dim": job.dim = Number(value); i++; break;
      case "--labels": job.labelsPath = value; i++; break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!job.imageDir || !job.outDir) {
    throw new Error("usage: export --images <dir> --out <dir> [--model ID] [--dim N] [--labels FILE]");
  }
  return job;
}

async function main(): Promise<number> {
  let job: ExportJob;
  try {
    job = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  try {
    const result = await exportEmbeddings(job);
    console.log(`exported ${result.exported} embeddings -> ${result.manifestPath}`);
    if (result.skipped.length > 0) {
      console.warn(`warnings: ${result.skipped.length} unreadable image(s)`);
      for (const s of result.skipped) console.warn(`  skipped ${s}`);
    }
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const entry = process.argv[1] ? path.resolve(process.argv[1]) : "";
if (import.meta.url === `file://${entry}`) {
  main().then((code) => process.exit(code));
}

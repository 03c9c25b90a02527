/**
 * Stimulus-table manifest matching the python datastore's JSON schema.
 * The exporter produces a sample-free manifest (subjects and samples empty);
 * downstream pipelines merge neural sample rows in or use the table directly
 * as a retrieval pool.
 */

import { promises as fs } from "node:fs";
import path from "node:path";

export interface StimulusRow {
  stimulus_id: string;
  class_label: string | null;
  embedding: string; // container path relative to the manifest
}

export interface StimulusManifest {
  format_version: number;
  embed_dim: number;
  model: string;
  subjects: string[];
  samples: unknown[];
  stimuli: StimulusRow[];
}

export function buildManifest(embedDim: number, model: string,
                              stimuli: StimulusRow[]): StimulusManifest {
  const rows = [...stimuli].sort((a, b) => a.stimulus_id.localeCompare(b.stimulus_id));
  return {
    format_version: 1,
    embed_dim: embedDim,
    model,
    subjects: [],
    samples: [],
    stimuli: rows,
  };
}

export async function writeManifest(filePath: string, manifest: StimulusManifest): Promise<void> {
  await fs.mkdir(path.dirname(filePath), { recursive: true });
  const tmp = `${filePath}.tmp`;
  await fs.writeFile(tmp, JSON.stringify(manifest, null, 2) + "\n");
  await fs.rename(tmp, filePath);
}

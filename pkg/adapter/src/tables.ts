/**
 * Reading of the dataset's native table layout.
 *
 * The layout mirrors nuScenes: a split directory holding JSON tables
 * (`scene.json`, `sample.json`, `sample_annotation.json`, `instance.json`)
 * where samples form a linked list per scene via prev/next tokens, plus an
 * optional `maps/lanes.json` with lane centerlines at the dataset root.
 */

import * as fs from "fs";
import * as path from "path";

export interface SceneRow {
  token: string;
  name: string;
  first_sample_token: string;
  nbr_samples: number;
}

export interface SampleRow {
  token: string;
  scene_token: string;
  timestamp: number; // microseconds
  prev: string; // "" when first
  next: string; // "" when last
}

export interface AnnotationRow {
  token: string;
  sample_token: string;
  instance_token: string;
  translation: [number, number, number];
}

export interface InstanceRow {
  token: string;
}

export interface LaneRow {
  lane_id: string;
  centerline: [number, number][];
}

export interface DatasetTables {
  scenes: SceneRow[];
  samples: Map<string, SampleRow>;
  /** annotation lookup: sample_token -> instance_token -> annotation */
  annotations: Map<string, Map<string, AnnotationRow>>;
  instances: InstanceRow[];
  lanes: LaneRow[] | null; // null when the dataset ships no map
}

export class AdapterError extends Error {
  constructor(public readonly kind: "unreadable-root" | "unknown-split" | "bad-table" | "empty-result", message: string) {
    super(message);
    this.name = "AdapterError";
  }
}

function readJsonTable(file: string): unknown {
  let text: string;
  try {
    text = fs.readFileSync(file, "utf-8");
  } catch (err) {
    throw new AdapterError("bad-table", `cannot read table ${file}: ${(err as Error).message}`);
  }
  try {
    return JSON.parse(text);
  } catch (err) {
    throw new AdapterError("bad-table", `invalid JSON in ${file}: ${(err as Error).message}`);
  }
}

function asArray(value: unknown, file: string): unknown[] {
  if (!Array.isArray(value)) {
    throw new AdapterError("bad-table", `${file}: expected a JSON array of rows`);
  }
  return value;
}

export function loadTables(root: string, split: string): DatasetTables {
  let rootStat: fs.Stats;
  try {
    rootStat = fs.statSync(root);
  } catch {
    throw new AdapterError("unreadable-root", `dataset root ${root} is not readable`);
  }
  if (!rootStat.isDirectory()) {
    throw new AdapterError("unreadable-root", `dataset root ${root} is not a directory`);
  }
  const splitDir = path.join(root, split);
  if (!fs.existsSync(splitDir) || !fs.statSync(splitDir).isDirectory()) {
    throw new AdapterError("unknown-split", `split ${split} not found under ${root}`);
  }

  const scenes = asArray(readJsonTable(path.join(splitDir, "scene.json")), "scene.json") as SceneRow[];
  const sampleRows = asArray(readJsonTable(path.join(splitDir, "sample.json")), "sample.json") as SampleRow[];
  const annotationRows = asArray(
    readJsonTable(path.join(splitDir, "sample_annotation.json")),
    "sample_annotation.json",
  ) as AnnotationRow[];
  const instances = asArray(readJsonTable(path.join(splitDir, "instance.json")), "instance.json") as InstanceRow[];

  const samples = new Map<string, SampleRow>();
  for (const row of sampleRows) {
    if (samples.has(row.token)) {
      throw new AdapterError("bad-table", `sample.json: duplicate token ${row.token}`);
    }
    samples.set(row.token, row);
  }
  const annotations = new Map<string, Map<string, AnnotationRow>>();
  for (const row of annotationRows) {
    let bySample = annotations.get(row.sample_token);
    if (!bySample) {
      bySample = new Map();
      annotations.set(row.sample_token, bySample);
    }
    bySample.set(row.instance_token, row);
  }

  let lanes: LaneRow[] | null = null;
  const lanesFile = path.join(root, "maps", "lanes.json");
  if (fs.existsSync(lanesFile)) {
    lanes = asArray(readJsonTable(lanesFile), "maps/lanes.json") as LaneRow[];
  }
  return { scenes, samples, annotations, instances, lanes };
}

/** Walk the prev/next linked list from the scene's first sample. */
export function orderedSamples(scene: SceneRow, tables: DatasetTables): SampleRow[] | null {
  const out: SampleRow[] = [];
  const seen = new Set<string>();
  let token = scene.first_sample_token;
  while (token !== "") {
    const sample = tables.samples.get(token);
    if (!sample || sample.scene_token !== scene.token || seen.has(token)) {
      return null; // broken chain
    }
    out.push(sample);
    seen.add(token);
    token = sample.next;
  }
  return out.length > 0 ? out : null;
}

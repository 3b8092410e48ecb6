/**
 * Conversion from the dataset's table layout to the scenes.jsonl interchange
 * format consumed by the evaluation harness.
 *
 * For each scene the first H+T keyframes form the evaluation window: the
 * first H become agent histories, the next T the ground-truth futures.
 * Only instances annotated in every window frame are exported; the rest are
 * counted as skips with a reason.  Lane centerlines with any point within
 * the configured radius of an exported agent's last observed position are
 * attached as the scene's semantic map.  The adapter emits scenes only;
 * prediction files are a model's job.
 */

import * as fs from "fs";
import * as path from "path";

import { AdapterError, DatasetTables, LaneRow, SampleRow, SceneRow, loadTables, orderedSamples } from "./tables";

export interface AdapterConfig {
  root: string;
  split: string;
  out: string;
  dt: number;
  historyLen: number;
  futureLen: number;
  radiusM: number;
}

export interface SkipEntry {
  scene: string;
  reason: string;
}

export interface AgentSkipEntry {
  scene: string;
  instance: string;
  reason: string;
}

export interface ConversionSummary {
  scenesIn: number;
  scenesWritten: number;
  scenesSkipped: SkipEntry[];
  agentsWritten: number;
  agentsSkipped: AgentSkipEntry[];
  outputFile: string;
}

interface AgentOut {
  agent_id: string;
  history: [number, number][];
  future: [number, number][];
}

interface SceneDoc {
  scene_id: string;
  dt: number;
  agents: AgentOut[];
  map: { lanes: LaneRow[] } | null;
}

const TIMESTEP_TOLERANCE = 0.25; // relative deviation allowed per step

function isFinitePair(value: unknown): value is [number, number, ...number[]] {
  return (
    Array.isArray(value) &&
    value.length >= 2 &&
    Number.isFinite(value[0]) &&
    Number.isFinite(value[1])
  );
}

function timestepsRegular(samples: SampleRow[], dt: number): boolean {
  for (let i = 1; i < samples.length; i++) {
    const step = (samples[i].timestamp - samples[i - 1].timestamp) / 1e6;
    if (Math.abs(step - dt) > TIMESTEP_TOLERANCE * dt) {
      return false;
    }
  }
  return true;
}

function extractAgents(
  scene: SceneRow,
  window: SampleRow[],
  tables: DatasetTables,
  cfg: AdapterConfig,
  skips: AgentSkipEntry[],
): AgentOut[] {
  const instanceTokens = new Set<string>();
  for (const sample of window) {
    const bySample = tables.annotations.get(sample.token);
    if (bySample) {
      for (const token of bySample.keys()) {
        instanceTokens.add(token);
      }
    }
  }
  const agents: AgentOut[] = [];
  for (const token of [...instanceTokens].sort()) {
    const track: [number, number][] = [];
    let missingAt = -1;
    for (let i = 0; i < window.length; i++) {
      const ann = tables.annotations.get(window[i].token)?.get(token);
      if (!ann || !isFinitePair(ann.translation)) {
        missingAt = i;
        break;
      }
      track.push([ann.translation[0], ann.translation[1]]);
    }
    if (missingAt >= 0) {
      const reason = missingAt < cfg.historyLen ? "insufficient history" : "insufficient future";
      skips.push({ scene: scene.name, instance: token, reason });
      continue;
    }
    agents.push({
      agent_id: token,
      history: track.slice(0, cfg.historyLen),
      future: track.slice(cfg.historyLen),
    });
  }
  return agents;
}

function lanesNearAgents(lanes: LaneRow[], agents: AgentOut[], radiusM: number): LaneRow[] {
  const anchors = agents.map((a) => a.history[a.history.length - 1]);
  const r2 = radiusM * radiusM;
  return lanes.filter((lane) =>
    lane.centerline.some(([x, y]) =>
      anchors.some(([ax, ay]) => (x - ax) * (x - ax) + (y - ay) * (y - ay) <= r2),
    ),
  );
}

export function convertScene(
  scene: SceneRow,
  tables: DatasetTables,
  cfg: AdapterConfig,
  agentSkips: AgentSkipEntry[],
): { doc: SceneDoc } | { skip: string } {
  const samples = orderedSamples(scene, tables);
  if (samples === null) {
    return { skip: "broken sample chain" };
  }
  const windowLen = cfg.historyLen + cfg.futureLen;
  if (samples.length < windowLen) {
    return { skip: "insufficient frames" };
  }
  const window = samples.slice(0, windowLen);
  if (!timestepsRegular(window, cfg.dt)) {
    return { skip: "timestep mismatch" };
  }
  const agents = extractAgents(scene, window, tables, cfg, agentSkips);
  if (agents.length === 0) {
    return { skip: "no eligible agents" };
  }
  const map =
    tables.lanes === null ? null : { lanes: lanesNearAgents(tables.lanes, agents, cfg.radiusM) };
  return {
    doc: {
      scene_id: scene.name,
      dt: cfg.dt,
      agents,
      map,
    },
  };
}

export function convert(cfg: AdapterConfig): ConversionSummary {
  const tables = loadTables(cfg.root, cfg.split);
  const scenes = [...tables.scenes].sort((a, b) => (a.name < b.name ? -1 : a.name > b.name ? 1 : 0));

  const lines: string[] = [];
  const sceneSkips: SkipEntry[] = [];
  const agentSkips: AgentSkipEntry[] = [];
  let agentsWritten = 0;
  for (const scene of scenes) {
    const result = convertScene(scene, tables, cfg, agentSkips);
    if ("skip" in result) {
      sceneSkips.push({ scene: scene.name, reason: result.skip });
      continue;
    }
    agentsWritten += result.doc.agents.length;
    lines.push(JSON.stringify(result.doc));
  }
  if (lines.length === 0) {
    throw new AdapterError("empty-result", `no convertible scenes in split ${cfg.split}`);
  }

  fs.mkdirSync(cfg.out, { recursive: true });
  const outputFile = path.join(cfg.out, `${cfg.split}.scenes.jsonl`);
  const tmp = outputFile + ".tmp";
  fs.writeFileSync(tmp, lines.join("\n") + "\n", "utf-8");
  fs.renameSync(tmp, outputFile);

  return {
    scenesIn: scenes.length,
    scenesWritten: lines.length,
    scenesSkipped: sceneSkips,
    agentsWritten,
    agentsSkipped: agentSkips,
    outputFile,
  };
}

export function formatSummary(summary: ConversionSummary): string {
  const lines = [
    `scenes: ${summary.scenesWritten} written, ${summary.scenesSkipped.length} skipped (of ${summary.scenesIn})`,
    `agents: ${summary.agentsWritten} written, ${summary.agentsSkipped.length} skipped`,
  ];
  for (const s of summary.scenesSkipped) {
    lines.push(`  skipped scene ${s.scene}: ${s.reason}`);
  }
  for (const s of summary.agentsSkipped) {
    lines.push(`  skipped agent ${s.instance} in ${s.scene}: ${s.reason}`);
  }
  lines.push(`wrote ${summary.outputFile}`);
  return lines.join("\n");
}

/**
 * Cross-component contract: every document the adapter emits must be
 * accepted by the evaluation harness, reached only through its external
 * interfaces (the scenes.jsonl format and the `classify` CLI subcommand).
 */

import { spawnSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { describe, expect, it } from "vitest";

import { convert } from "../src";

const MINI = path.join(__dirname, "..", "fixtures", "mini");

function harnessAvailable(): boolean {
  const probe = spawnSync("python3", ["-m", "predsafe", "--version"], { encoding: "utf-8" });
  return probe.status === 0;
}

describe("primary-harness contract", () => {
  it.skipIf(!harnessAvailable())(
    "converted fixture passes the harness parser with zero violations",
    () => {
      const out = fs.mkdtempSync(path.join(os.tmpdir(), "adapter-contract-"));
      try {
        const summary = convert({
          root: MINI,
          split: "v1.0-mini",
          out,
          dt: 0.5,
          historyLen: 4,
          futureLen: 6,
          radiusM: 30,
        });
        expect(summary.scenesWritten).toBe(2);

        const result = spawnSync(
          "python3",
          ["-m", "predsafe", "classify", "--scenes", summary.outputFile, "--out", out],
          { encoding: "utf-8" },
        );
        expect(result.stderr).toBe("");
        expect(result.status).toBe(0);

        const table = fs.readFileSync(path.join(out, "classification.csv"), "utf-8");
        const rows = table.trim().split("\n");
        expect(rows).toHaveLength(1 + summary.scenesWritten);
        expect(rows[1]).toContain("scene-0001");
        expect(rows[2]).toContain("scene-0002");
      } finally {
        fs.rmSync(out, { recursive: true, force: true });
      }
    },
  );
});

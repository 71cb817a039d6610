import { spawnSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeAll, describe, expect, it } from "vitest";

import { batchRewards, computeReward } from "../src/client.js";
import { CliNotFoundError, RewardRequest } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));
const repoRoot = resolve(here, "..", "..");
const checkerCmd = `python3 ${join(repoRoot, "scripts", "box_checker.py")} {input} {output}`;

const opts = { checkerCmd, seed: 7, timeoutS: 120 };

function boxStep(dx: number, dy: number, dz: number, extra = ""): string {
  return [
    "ISO-10303-21;",
    "HEADER;",
    "FILE_NAME('box.step','',(''),(''),'','','');",
    "ENDSEC;",
    "DATA;",
    `#1=BOX('',${dx},${dy},${dz});`,
    extra,
    "ENDSEC;",
    "END-ISO-10303-21;",
    "",
  ].join("\n");
}

let workdir: string;
let gtPath: string;

beforeAll(() => {
  workdir = mkdtempSync(join(tmpdir(), "trainer-client-test-"));
  gtPath = join(workdir, "gt.step");
  writeFileSync(gtPath, boxStep(1.0, 1.0, 1.0));
});

describe("computeReward", () => {
  it("scores an identity pair 1.0", async () => {
    const res = await computeReward(
      { predStepText: boxStep(1.0, 1.0, 1.0), gtStepPath: gtPath },
      opts,
    );
    expect(res.failureReason).toBeUndefined();
    expect(res.reward).toBe(1.0);
    expect(res.scd).toBeDefined();
    expect(res.scd!).toBeLessThan(1e-6);
  }, 120_000);

  it("maps a truncated prediction to reward 0 with reason parse", async () => {
    const res = await computeReward(
      { predStepText: "ISO-10303-21;HEADER;ENDSEC;DATA;#1=BOX(", gtStepPath: gtPath },
      opts,
    );
    expect(res.reward).toBe(0.0);
    expect(res.failureReason).toBe("parse");
  }, 60_000);

  it("matches the CLI bit-for-bit on an interpolation fixture", async () => {
    // measure the deterministic scd of a shape mismatch, then bracket it
    // with thresholds so the linear branch must return 0.5
    const pred = boxStep(2.0, 1.0, 1.0);
    const probe = await computeReward({ predStepText: pred, gtStepPath: gtPath }, opts);
    expect(probe.scd).toBeDefined();
    const scd = probe.scd!;
    expect(scd).toBeGreaterThan(1e-9);

    const thresholds = { deltaLow: 0.5 * scd, deltaHigh: 1.5 * scd };
    const res = await computeReward(
      { predStepText: pred, gtStepPath: gtPath, thresholds },
      opts,
    );
    expect(Math.abs(res.reward - 0.5)).toBeLessThan(1e-9);

    // cross-check against a direct CLI invocation with identical arguments
    const predPath = join(workdir, "interp.step");
    writeFileSync(predPath, pred);
    const direct = spawnSync(
      "stepkit",
      [
        "metrics", "--json", "--pred", predPath, "--gt", gtPath,
        "--checker-cmd", checkerCmd, "--seed", "7",
        "--delta-low", String(thresholds.deltaLow),
        "--delta-high", String(thresholds.deltaHigh),
      ],
      { encoding: "utf8" },
    );
    expect(direct.status).toBe(0);
    const verdict = JSON.parse(direct.stdout);
    expect(res.reward).toBe(verdict.reward);
    expect(res.scd).toBe(verdict.scd);
  }, 120_000);

  it("returns reward 0 instead of throwing on nonsense input", async () => {
    const res = await computeReward(
      { predStepText: "this is not a STEP file at all", gtStepPath: gtPath },
      opts,
    );
    expect(res.reward).toBe(0.0);
    expect(res.failureReason).toBe("parse");
  }, 60_000);

  it("handles empty prediction text without spawning", async () => {
    const res = await computeReward({ predStepText: "", gtStepPath: gtPath }, opts);
    expect(res.reward).toBe(0.0);
    expect(res.failureReason).toBe("parse");
  });

  it("maps a render failure", async () => {
    const pred = [
      "ISO-10303-21;", "HEADER;", "ENDSEC;", "DATA;",
      "#1=CARTESIAN_POINT('',(0.,0.,0.));", // no BOX: stub checker exits 1
      "ENDSEC;", "END-ISO-10303-21;", "",
    ].join("\n");
    const res = await computeReward({ predStepText: pred, gtStepPath: gtPath }, opts);
    expect(res.reward).toBe(0.0);
    expect(res.failureReason).toBe("render");
  }, 60_000);

  it("times out into reward 0", async () => {
    const pred = boxStep(1.0, 1.0, 1.0, "#2=SLOW('',30.);");
    const res = await computeReward(
      { predStepText: pred, gtStepPath: gtPath, timeoutS: 2 },
      opts,
    );
    expect(res.reward).toBe(0.0);
    expect(res.failureReason).toBe("timeout");
  }, 60_000);

  it("throws CliNotFoundError when the executable is missing", async () => {
    await expect(
      computeReward(
        { predStepText: boxStep(1, 1, 1), gtStepPath: gtPath },
        { ...opts, cliCommand: "/nonexistent/stepkit" },
      ),
    ).rejects.toBeInstanceOf(CliNotFoundError);
  });
});

describe("batchRewards", () => {
  it("scores 8 identical identity pairs as 8 ones", async () => {
    const reqs: RewardRequest[] = Array.from({ length: 8 }, () => ({
      predStepText: boxStep(1.0, 1.0, 1.0),
      gtStepPath: gtPath,
    }));
    const out = await batchRewards(reqs, { ...opts, concurrency: 4 });
    expect(out).toHaveLength(8);
    for (const res of out) {
      expect(res.reward).toBe(1.0);
    }
  }, 240_000);

  it("preserves order for mixed valid/invalid requests", async () => {
    const reqs: RewardRequest[] = [
      { predStepText: boxStep(1.0, 1.0, 1.0), gtStepPath: gtPath },
      { predStepText: "garbage", gtStepPath: gtPath },
      { predStepText: boxStep(1.0, 1.0, 1.0), gtStepPath: gtPath },
      { predStepText: "", gtStepPath: gtPath },
    ];
    const out = await batchRewards(reqs, { ...opts, concurrency: 2 });
    expect(out.map((r) => r.reward)).toEqual([1.0, 0.0, 1.0, 0.0]);
    expect(out[1]!.failureReason).toBe("parse");
    expect(out[3]!.failureReason).toBe("parse");
  }, 240_000);

  it("returns an empty list for an empty batch", async () => {
    expect(await batchRewards([], opts)).toEqual([]);
  });

  it("never lets an exception escape, even for a missing CLI", async () => {
    const out = await batchRewards(
      [{ predStepText: boxStep(1, 1, 1), gtStepPath: gtPath }],
      { ...opts, cliCommand: "/nonexistent/stepkit" },
    );
    expect(out).toHaveLength(1);
    expect(out[0]!.reward).toBe(0.0);
    expect(out[0]!.failureReason).toBe("cli");
  });
});

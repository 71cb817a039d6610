import { spawn } from "node:child_process";
import { mkdtemp, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import {
  ClientOptions,
  CliNotFoundError,
  FailureReason,
  RewardRequest,
  RewardResponse,
} from "./types.js";

const DEFAULT_TIMEOUT_S = 300;
const DEFAULT_CONCURRENCY = 4;

interface CliVerdict {
  scd: number | null;
  reward: number;
  failure_reason?: string;
  detail?: string;
}

function zeroReward(reason: FailureReason, detail?: string): RewardResponse {
  return { reward: 0, failureReason: reason, detail };
}

/** CLI failure stages use a `_gt` suffix for ground-truth-side failures;
 * the training loop only cares about the stage itself. */
function normalizeReason(raw: string): FailureReason {
  const base = raw.endsWith("_gt") ? raw.slice(0, -3) : raw;
  if (base === "parse" || base === "render" || base === "registration") {
    return base;
  }
  return "cli";
}

function buildArgs(req: RewardRequest, predPath: string, opts: ClientOptions): string[] {
  const args = ["metrics", "--json", "--pred", predPath, "--gt", req.gtStepPath];
  if (opts.configPath) {
    args.unshift("--config", opts.configPath);
  }
  if (opts.checkerCmd) {
    args.push("--checker-cmd", opts.checkerCmd);
  }
  if (opts.seed !== undefined) {
    args.push("--seed", String(opts.seed));
  }
  if (opts.nPoints !== undefined) {
    args.push("--n-points", String(opts.nPoints));
  }
  if (req.thresholds) {
    args.push("--delta-low", String(req.thresholds.deltaLow));
    args.push("--delta-high", String(req.thresholds.deltaHigh));
  }
  return args;
}

function runCli(
  command: string,
  args: string[],
  timeoutS: number,
): Promise<{ code: number | null; stdout: string; stderr: string; timedOut: boolean }> {
  return new Promise((resolve, reject) => {
    const child = spawn(command, args, { stdio: ["ignore", "pipe", "pipe"] });
    let stdout = "";
    let stderr = "";
    let timedOut = false;
    const timer = setTimeout(() => {
      timedOut = true;
      child.kill("SIGKILL");
    }, timeoutS * 1000);

    child.stdout.on("data", (chunk) => (stdout += chunk));
    child.stderr.on("data", (chunk) => (stderr += chunk));
    child.on("error", (err: NodeJS.ErrnoException) => {
      clearTimeout(timer);
      if (err.code === "ENOENT") {
        reject(new CliNotFoundError(command, err.message));
      } else {
        reject(err);
      }
    });
    child.on("close", (code) => {
      clearTimeout(timer);
      resolve({ code, stdout, stderr, timedOut });
    });
  });
}

/**
 * Compute the geometric reward for one (predicted STEP text, ground truth)
 * pair by invoking the `stepkit metrics --json` contract.
 *
 * Per-sample failures (unparseable prediction, failed meshing or
 * registration, timeout) come back as reward 0 with a reason; only a
 * missing CLI executable throws.
 */
export async function computeReward(
  req: RewardRequest,
  opts: ClientOptions = {},
): Promise<RewardResponse> {
  if (!req.predStepText || req.predStepText.trim() === "") {
    return zeroReward("parse", "empty prediction text");
  }
  const timeoutS = req.timeoutS ?? opts.timeoutS ?? DEFAULT_TIMEOUT_S;
  if (!(timeoutS > 0)) {
    return zeroReward("cli", `invalid timeout ${timeoutS}`);
  }
  const command = opts.cliCommand ?? "stepkit";
  const workdir = await mkdtemp(join(tmpdir(), "reward-"));
  try {
    const predPath = join(workdir, "pred.step");
    await writeFile(predPath, req.predStepText, "utf8");
    const result = await runCli(command, buildArgs(req, predPath, opts), timeoutS);
    if (result.timedOut) {
      return zeroReward("timeout", `no verdict within ${timeoutS}s`);
    }
    if (result.code !== 0) {
      return zeroReward("cli", `exit ${result.code}: ${result.stderr.trim()}`);
    }
    let verdict: CliVerdict;
    try {
      verdict = JSON.parse(result.stdout) as CliVerdict;
    } catch {
      return zeroReward("cli", `unparseable CLI output: ${result.stdout.slice(0, 200)}`);
    }
    const response: RewardResponse = { reward: verdict.reward };
    if (typeof verdict.scd === "number") {
      response.scd = verdict.scd;
    }
    if (verdict.failure_reason) {
      response.failureReason = normalizeReason(verdict.failure_reason);
      response.detail = verdict.detail;
    }
    return response;
  } finally {
    await rm(workdir, { recursive: true, force: true });
  }
}

/**
 * Rewards for a whole sampling group (e.g. the responses of one prompt),
 * computed with bounded parallelism. Output order matches input order and
 * per-item problems never abort the batch.
 */
export async function batchRewards(
  reqs: RewardRequest[],
  opts: ClientOptions = {},
): Promise<RewardResponse[]> {
  const concurrency = Math.max(1, opts.concurrency ?? DEFAULT_CONCURRENCY);
  const results: RewardResponse[] = new Array(reqs.length);
  let next = 0;

  async function worker(): Promise<void> {
    for (;;) {
      const index = next++;
      if (index >= reqs.length) {
        return;
      }
      try {
        results[index] = await computeReward(reqs[index]!, opts);
      } catch (err) {
        results[index] = zeroReward("cli", err instanceof Error ? err.message : String(err));
      }
    }
  }

  const workers = Array.from(
    { length: Math.min(concurrency, Math.max(reqs.length, 1)) },
    () => worker(),
  );
  await Promise.all(workers);
  return results;
}

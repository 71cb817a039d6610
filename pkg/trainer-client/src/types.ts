/** Reward thresholds override; mirrors the CLI's --delta-low/--delta-high. */
export interface RewardThresholds {
  deltaLow: number;
  deltaHigh: number;
}

/** One reward query: a raw predicted STEP text against a ground-truth file. */
export interface RewardRequest {
  /** Raw model output; written to a temp file for the CLI. */
  predStepText: string;
  /** Path to the ground-truth STEP (or STL) file. */
  gtStepPath: string;
  /** Optional threshold override for the piecewise reward. */
  thresholds?: RewardThresholds;
  /** Wall-clock budget for the CLI call, seconds. */
  timeoutS?: number;
}

export type FailureReason =
  | "parse"
  | "render"
  | "registration"
  | "timeout"
  | "cli";

/**
 * Reward outcome. `reward` is always present: any failure yields 0 with
 * `failureReason` set, so the training loop never has to handle exceptions
 * for bad samples.
 */
export interface RewardResponse {
  reward: number;
  scd?: number;
  failureReason?: FailureReason;
  detail?: string;
}

/** Client-level configuration shared by every request. */
export interface ClientOptions {
  /** Executable to invoke; must speak the `metrics --json` contract. */
  cliCommand?: string;
  /** STEP-to-STL checker template with {input} and {output} placeholders. */
  checkerCmd?: string;
  /** Sampling seed forwarded to the CLI (keeps rewards deterministic). */
  seed?: number;
  /** Point count per sampled cloud. */
  nPoints?: number;
  /** Config file forwarded as `--config`. */
  configPath?: string;
  /** Parallel subprocesses for batchRewards. */
  concurrency?: number;
  /** Default per-request timeout, seconds. */
  timeoutS?: number;
}

/** The CLI executable itself is missing: an environment problem, not a
 * per-sample verdict, so this one does throw. */
export class CliNotFoundError extends Error {
  constructor(command: string, cause?: string) {
    super(`stepkit CLI not found: ${command}${cause ? ` (${cause})` : ""}`);
    this.name = "CliNotFoundError";
  }
}

export { batchRewards, computeReward } from "./client.js";
export {
  ClientOptions,
  CliNotFoundError,
  FailureReason,
  RewardRequest,
  RewardResponse,
  RewardThresholds,
} from "./types.js";

export {
  ApiError,
  BenchmarkApi,
  type ClipSummary,
  type RatingPayload,
  type StudySession,
} from "./api.js";
export { RatingSession, SessionError, type SessionRating } from "./session.js";
export {
  canonicalJson,
  CoverageError,
  curateCandidates,
  curationThreshold,
  decideFromSummaries,
  fetchCuration,
  type ClipDecision,
  type CurationReport,
  type RatingInput,
} from "./dashboard.js";

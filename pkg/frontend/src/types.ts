/** Wire types for the /api/v1 interface. All coordinates are normalized
 * image-space fractions in [0, 1]; the server validates ordering. */

export interface BoundingBox {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
}

export interface SubmissionEntry {
  class_id: string;
  asserted: boolean;
  boxes: BoundingBox[];
}

export interface LocalizeSubmitRequest {
  case_id: string;
  entries: SubmissionEntry[];
  elapsed_seconds: number;
  idempotency_key?: string;
}

export interface ReportSubmitRequest {
  case_id: string;
  candidate_text: string;
  elapsed_seconds: number;
  idempotency_key?: string;
}

export interface SessionState {
  participant_id: string;
  module: "Localize" | "Report";
  group: "Gamified" | "Traditional";
  phase: "PreTest" | "Learning" | "PostTest" | "Done";
  phase_started: boolean;
  deadline: number | null;
  cursor: number;
  cases_completed: number;
}

export interface LocalizeCasePayload {
  case_id: string;
  image_ref: string;
}

export interface ReportCasePayload {
  case_id: string;
  image_refs: string[];
  age_years: number;
  indication: string;
}

export interface FeedbackItem {
  case_id: string;
  class_id: string;
  kind: "draw_missed" | "draw_wrong_location" | "select_missed";
  overlay_image_ref: string | null;
  explanation_text: string;
  source: "model" | "fixture";
}

export interface CrimsonAssessment {
  Explanation: string;
  ClinicallySignificantErrors: {
    a: string[];
    b: string[];
    c: string[];
    d: string[];
  };
  MatchedFindings: string[];
}

export interface StyleAssessment {
  systematic_evaluation_score: number;
  organization_language_score: number;
  systematic_evaluation_recommendation?: string;
  organization_language_recommendation?: string;
}

/** Submit responses: test phases acknowledge only; learning responses are
 * gated by study arm. The client never computes any of these numbers. */
export interface TestPhaseResponse {
  status: "recorded";
  case_id: string;
}

export interface GamifiedLocalizeResponse {
  case_id: string;
  grade: { case_accuracy: number; recall: number; [k: string]: unknown };
  feedback: FeedbackItem[];
  ground_truth: unknown[];
}

export interface TraditionalLocalizeResponse {
  case_id: string;
  ground_truth: unknown[];
}

export interface GamifiedReportResponse {
  case_id: string;
  crimson_percent: number;
  style_percent: number | null;
  assessment: CrimsonAssessment;
  style_assessment: StyleAssessment | null;
  reference_findings: string;
}

export interface TraditionalReportResponse {
  case_id: string;
  reference_findings: string;
}

export type SubmitResponse =
  | TestPhaseResponse
  | GamifiedLocalizeResponse
  | TraditionalLocalizeResponse
  | GamifiedReportResponse
  | TraditionalReportResponse
  | { case_id: string; status: "score_pending"; reference_findings: string };

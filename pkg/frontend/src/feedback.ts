/** View models for post-submission screens.
 *
 * Every number shown to the trainee comes straight out of a server payload;
 * nothing in this module computes a score. Test-phase acknowledgments
 * produce view models with no score surface at all, so a rendering bug
 * cannot leak withheld results.
 */

import type {
  CrimsonAssessment,
  FeedbackItem,
  StyleAssessment,
  SubmitResponse,
} from "./types.js";

export const ERROR_CATEGORY_LABELS: Record<"a" | "b" | "c" | "d", string> = {
  a: "False report of a finding",
  b: "Missing a finding",
  c: "Wrong location of a finding",
  d: "Wrong severity of a finding",
};

export interface FeedbackCard {
  classId: string;
  kind: FeedbackItem["kind"];
  explanation: string;
  /** null renders the placeholder image state */
  overlayUrl: string | null;
  /** reachable via tab order; index doubles as the roving tabindex key */
  tabIndex: number;
  read: boolean;
}

export interface ErrorCategorySection {
  category: "a" | "b" | "c" | "d";
  label: string;
  items: string[];
}

export interface ReportFeedbackPanel {
  kind: "gamified-report";
  crimsonDisplay: string;
  styleDisplay: string;
  matchedFindings: string[];
  /** always four sections, a through d, even when empty */
  errorSections: ErrorCategorySection[];
  styleRecommendations: string[];
  referenceFindings: string;
}

export interface AcknowledgmentPanel {
  kind: "acknowledgment";
  caseId: string;
  message: string;
}

export interface TraditionalPanel {
  kind: "traditional";
  referenceFindings?: string;
  groundTruthCount?: number;
  nextCaseEnabled: true;
}

export interface GamifiedLocalizePanel {
  kind: "gamified-localize";
  accuracyDisplay: string;
  cards: FeedbackCard[];
}

export interface PendingPanel {
  kind: "score-pending";
  referenceFindings: string;
}

export type SubmitPanel =
  | AcknowledgmentPanel
  | TraditionalPanel
  | GamifiedLocalizePanel
  | ReportFeedbackPanel
  | PendingPanel;

function percentDisplay(value: number | null): string {
  return value === null ? "pending" : `${value.toFixed(1)}%`;
}

export function feedbackCards(items: FeedbackItem[]): FeedbackCard[] {
  return items.map((item, i) => ({
    classId: item.class_id,
    kind: item.kind,
    explanation: item.explanation_text,
    overlayUrl: item.overlay_image_ref,
    tabIndex: i,
    read: false,
  }));
}

export function errorSections(assessment: CrimsonAssessment): ErrorCategorySection[] {
  return (["a", "b", "c", "d"] as const).map((category) => ({
    category,
    label: ERROR_CATEGORY_LABELS[category],
    items: assessment.ClinicallySignificantErrors[category],
  }));
}

function styleRecommendations(style: StyleAssessment | null): string[] {
  if (!style) return [];
  return [
    style.systematic_evaluation_recommendation,
    style.organization_language_recommendation,
  ].filter((r): r is string => !!r && r.length > 0);
}

/** Map a submit response to the panel the trainee sees next. */
export function panelFor(response: SubmitResponse): SubmitPanel {
  if ("status" in response && response.status === "recorded") {
    return {
      kind: "acknowledgment",
      caseId: response.case_id,
      message: "Response recorded.",
    };
  }
  if ("status" in response && response.status === "score_pending") {
    return { kind: "score-pending", referenceFindings: response.reference_findings };
  }
  if ("crimson_percent" in response) {
    return {
      kind: "gamified-report",
      crimsonDisplay: percentDisplay(response.crimson_percent),
      styleDisplay: percentDisplay(response.style_percent),
      matchedFindings: response.assessment.MatchedFindings,
      errorSections: errorSections(response.assessment),
      styleRecommendations: styleRecommendations(response.style_assessment),
      referenceFindings: response.reference_findings,
    };
  }
  if ("grade" in response) {
    return {
      kind: "gamified-localize",
      accuracyDisplay: percentDisplay(response.grade.case_accuracy * 100),
      cards: feedbackCards(response.feedback),
    };
  }
  if ("ground_truth" in response) {
    return {
      kind: "traditional",
      groundTruthCount: response.ground_truth.length,
      nextCaseEnabled: true,
    };
  }
  return {
    kind: "traditional",
    referenceFindings: response.reference_findings,
    nextCaseEnabled: true,
  };
}

/** Advance gate: every card must be marked read before next-case unlocks. */
export function canAdvance(cards: FeedbackCard[]): boolean {
  return cards.every((c) => c.read);
}

export function markRead(cards: FeedbackCard[], index: number): FeedbackCard[] {
  if (index < 0 || index >= cards.length) throw new Error(`no card ${index}`);
  return cards.map((c, i) => (i === index ? { ...c, read: true } : c));
}

/** Roving focus for keyboard-only navigation across cards. */
export function nextFocus(cards: FeedbackCard[], current: number, dir: 1 | -1): number {
  if (cards.length === 0) return -1;
  return (current + dir + cards.length) % cards.length;
}

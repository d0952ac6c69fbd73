import {
  AttackRequest,
  AttackRequestSchema,
  Detection,
  JobResult,
  SessionResponse,
  TraceEntry,
} from "./schema";

/** Single-page state machine: one in-flight job per session. */

export type Phase = "idle" | "ready" | "submitting" | "polling" | "done" | "failed";

export interface StudioState {
  phase: Phase;
  session: SessionResponse | null;
  /** indices into session.detections marked sensitive by clicking */
  selectedBoxes: ReadonlySet<number>;
  /** category names marked sensitive via the category picker */
  selectedCategories: ReadonlySet<string>;
  mode: "all" | "sensitive";
  /** epsilon slider position k, meaning k/255 */
  epsilonStep: number;
  threshold: number;
  maxIterations: number;
  targetCategory: string | null;
  jobId: string | null;
  trace: TraceEntry[];
  result: JobResult | null;
  error: string | null;
}

export function initialState(): StudioState {
  return {
    phase: "idle",
    session: null,
    selectedBoxes: new Set(),
    selectedCategories: new Set(),
    mode: "all",
    epsilonStep: 3,
    threshold: 0.3,
    maxIterations: 150,
    targetCategory: null,
    jobId: null,
    trace: [],
    result: null,
    error: null,
  };
}

export function withSession(state: StudioState, session: SessionResponse): StudioState {
  return {
    ...initialState(),
    phase: "ready",
    session,
    mode: state.mode,
    epsilonStep: state.epsilonStep,
    threshold: state.threshold,
    maxIterations: state.maxIterations,
  };
}

export function toggleBox(state: StudioState, index: number): StudioState {
  if (state.session === null || index < 0 || index >= state.session.detections.length) {
    return state;
  }
  const selected = new Set(state.selectedBoxes);
  if (selected.has(index)) selected.delete(index);
  else selected.add(index);
  return { ...state, selectedBoxes: selected };
}

export function toggleCategory(state: StudioState, name: string): StudioState {
  if (state.session === null || !state.session.categories.includes(name)) return state;
  const selected = new Set(state.selectedCategories);
  if (selected.has(name)) selected.delete(name);
  else selected.add(name);
  return { ...state, selectedCategories: selected };
}

export function buildRequest(state: StudioState): AttackRequest {
  return AttackRequestSchema.parse({
    mode: state.mode,
    sensitive_categories: [...state.selectedCategories].sort(),
    box_indices: [...state.selectedBoxes].sort((a, b) => a - b),
    target_category: state.mode === "sensitive" ? state.targetCategory : null,
    epsilon: `${state.epsilonStep}/255`,
    threshold: state.threshold,
    max_iterations: state.maxIterations,
  });
}

/** null when submission is allowed, otherwise the message to show inline. */
export function submissionBlock(state: StudioState): string | null {
  if (state.session === null) return "upload an image first";
  if (state.phase === "submitting" || state.phase === "polling") {
    return "a job is already running for this session";
  }
  try {
    buildRequest(state);
  } catch (err) {
    const issues = (err as { issues?: { message: string }[] }).issues;
    return issues?.length ? issues[0].message : String(err);
  }
  return null;
}

export function submitted(state: StudioState, jobId: string): StudioState {
  return { ...state, phase: "polling", jobId, trace: [], result: null, error: null };
}

export function polled(state: StudioState, trace: TraceEntry[]): StudioState {
  return { ...state, trace };
}

export function finished(state: StudioState, result: JobResult): StudioState {
  return { ...state, phase: "done", result };
}

export function failed(state: StudioState, error: string): StudioState {
  // failure reason from the backend is displayed verbatim; selection survives
  return { ...state, phase: "failed", error, jobId: null };
}

export function selectionBadges(state: StudioState): string[] {
  if (state.session === null) return [];
  const fromBoxes = [...state.selectedBoxes]
    .sort((a, b) => a - b)
    .map((i) => {
      const det: Detection = state.session!.detections[i];
      return `#${i} ${det.category} (${det.score.toFixed(2)})`;
    });
  const fromCategories = [...state.selectedCategories].sort().map((name) => `all ${name}s`);
  return [...fromBoxes, ...fromCategories];
}

import { describe, expect, it } from "vitest";

import { SessionResponse } from "../src/schema";
import type { StudioState } from "../src/state";
import {
  buildRequest,
  failed,
  finished,
  initialState,
  selectionBadges,
  submissionBlock,
  submitted,
  toggleBox,
  toggleCategory,
  withSession,
} from "../src/state";

const SESSION: SessionResponse = {
  session_id: "s1",
  width: 64,
  height: 64,
  categories: ["circle", "square", "triangle"],
  detections: [
    { index: 0, box: [4, 4, 20, 20], category_index: 0, category: "circle", score: 0.91 },
    { index: 1, box: [30, 30, 50, 50], category_index: 1, category: "square", score: 0.84 },
  ],
};

function readyState() {
  return withSession(initialState(), SESSION);
}

describe("selection toggling", () => {
  it("click adds, second click removes", () => {
    let state = readyState();
    state = toggleBox(state, 1);
    expect([...state.selectedBoxes]).toEqual([1]);
    state = toggleBox(state, 1);
    expect(state.selectedBoxes.size).toBe(0);
  });

  it("out-of-range indices are ignored", () => {
    const state = toggleBox(readyState(), 7);
    expect(state.selectedBoxes.size).toBe(0);
  });

  it("category toggle mirrors box toggle", () => {
    let state = toggleCategory(readyState(), "circle");
    expect([...state.selectedCategories]).toEqual(["circle"]);
    state = toggleCategory(state, "circle");
    expect(state.selectedCategories.size).toBe(0);
  });

  it("unknown category names are ignored", () => {
    const state = toggleCategory(readyState(), "person");
    expect(state.selectedCategories.size).toBe(0);
  });

  it("badges describe boxes then categories", () => {
    let state = toggleBox(readyState(), 0);
    state = toggleCategory(state, "square");
    expect(selectionBadges(state)).toEqual(["#0 circle (0.91)", "all squares"]);
  });
});

describe("submission gating", () => {
  it("hide-all submits with no selection", () => {
    const state = { ...readyState(), mode: "all" as const };
    expect(submissionBlock(state)).toBeNull();
  });

  it("sensitive mode with empty selection is blocked client-side", () => {
    const state = { ...readyState(), mode: "sensitive" as const, targetCategory: "triangle" };
    expect(submissionBlock(state)).toMatch(/select at least one/);
  });

  it("sensitive mode without a disguise category is blocked", () => {
    const state = toggleBox({ ...readyState(), mode: "sensitive" as const }, 0);
    expect(submissionBlock(state)).toMatch(/disguise/);
  });

  it("a complete sensitive selection passes", () => {
    let state: StudioState = { ...readyState(), mode: "sensitive", targetCategory: "triangle" };
    state = toggleBox(state, 0);
    expect(submissionBlock(state)).toBeNull();
  });

  it("no session means no submission", () => {
    expect(submissionBlock(initialState())).toMatch(/upload/);
  });

  it("an in-flight job blocks a second submission", () => {
    let state: StudioState = { ...readyState(), mode: "all" };
    state = submitted(state, "j9");
    expect(submissionBlock(state)).toMatch(/already running/);
  });
});

describe("request building", () => {
  it("serializes the epsilon slider as k/255", () => {
    const state = { ...readyState(), epsilonStep: 8 };
    expect(buildRequest(state).epsilon).toBe("8/255");
  });

  it("sorts box indices and category names", () => {
    let state: StudioState = { ...readyState(), mode: "sensitive", targetCategory: "triangle" };
    state = toggleBox(state, 1);
    state = toggleBox(state, 0);
    const request = buildRequest(state);
    expect(request.box_indices).toEqual([0, 1]);
    expect(request.target_category).toBe("triangle");
  });

  it("omits the target in hide-all mode", () => {
    const state = { ...readyState(), targetCategory: "triangle" };
    expect(buildRequest(state).target_category).toBeNull();
  });
});

describe("job lifecycle", () => {
  it("submitted -> finished carries the result", () => {
    let state = submitted({ ...readyState(), mode: "all" as const }, "j3");
    expect(state.phase).toBe("polling");
    state = finished(state, {
      succeeded: true,
      iterations_used: 4,
      image_base64: "aGVsbG8=",
      detections: [],
      psnr: 31.2,
      ssim: 0.88,
    });
    expect(state.phase).toBe("done");
    expect(state.result?.iterations_used).toBe(4);
  });

  it("failure keeps the backend message verbatim and the selection intact", () => {
    let state = toggleBox({ ...readyState(), mode: "sensitive" as const }, 0);
    state = failed(state, "box index 99 out of range");
    expect(state.phase).toBe("failed");
    expect(state.error).toBe("box index 99 out of range");
    expect(state.selectedBoxes.size).toBe(1);
  });
});

import {
  ApiError,
  createSession,
  getJobResult,
  pollUntilDone,
  submitAttack,
} from "./api";
import { base64ToBytes, sha256Hex } from "./bytes";
import { drawDetections, hitTest } from "./overlay";
import { DEFAULT_EPSILON_STEP, Detection, EPSILON_SLIDER_STEPS } from "./schema";
import {
  StudioState,
  buildRequest,
  failed,
  finished,
  initialState,
  polled,
  selectionBadges,
  submissionBlock,
  submitted,
  toggleBox,
  toggleCategory,
  withSession,
} from "./state";

const SCALE = 6; // canvas magnification of the (small) scene images

let state: StudioState = initialState();
let originalBitmap: ImageBitmap | null = null;
let resultBitmap: ImageBitmap | null = null;
let resultChecksum = "";

const el = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

function setState(next: StudioState): void {
  state = next;
  render();
}

async function onFileChosen(file: File): Promise<void> {
  const bytes = new Uint8Array(await file.arrayBuffer());
  try {
    const session = await createSession(bytes);
    originalBitmap = await createImageBitmap(new Blob([bytes.slice().buffer], { type: "image/png" }));
    resultBitmap = null;
    setState(withSession(state, session));
  } catch (err) {
    setState({ ...state, error: describeError(err) });
  }
}

function describeError(err: unknown): string {
  if (err instanceof ApiError && Array.isArray(err.detail)) {
    return err.detail
      .map((d: { loc?: unknown[]; msg?: string }) => `${(d.loc ?? []).join(".")}: ${d.msg}`)
      .join("; ");
  }
  return String(err);
}

async function onSubmit(): Promise<void> {
  const block = submissionBlock(state);
  if (block !== null) {
    setState({ ...state, error: block });
    return;
  }
  setState({ ...state, phase: "submitting", error: null });
  try {
    const request = buildRequest(state);
    const jobId = await submitAttack(state.session!.session_id, request);
    setState(submitted(state, jobId));
    const terminal = await pollUntilDone(jobId, (job) => setState(polled(state, job.trace)));
    if (terminal.state === "failed") {
      setState(failed(state, terminal.error ?? "job failed"));
      return;
    }
    const result = await getJobResult(jobId);
    // the preview and the download both use the backend bytes untouched
    const bytes = base64ToBytes(result.image_base64);
    resultChecksum = await sha256Hex(bytes);
    resultBitmap = await createImageBitmap(new Blob([bytes.slice().buffer], { type: "image/png" }));
    const link = el<HTMLAnchorElement>("download");
    link.href = URL.createObjectURL(new Blob([bytes.slice().buffer], { type: "image/png" }));
    link.download = "protected.png";
    setState(finished(state, result));
  } catch (err) {
    setState(failed(state, describeError(err)));
  }
}

function onCanvasClick(event: MouseEvent): void {
  if (state.session === null || state.mode !== "sensitive") return;
  const canvas = el<HTMLCanvasElement>("before");
  const rect = canvas.getBoundingClientRect();
  const x = ((event.clientX - rect.left) / rect.width) * state.session.width;
  const y = ((event.clientY - rect.top) / rect.height) * state.session.height;
  const hit = hitTest(state.session.detections, x, y);
  if (hit >= 0) setState(toggleBox(state, hit));
}

function renderCanvas(
  id: string,
  bitmap: ImageBitmap | null,
  detections: readonly Detection[],
  selected: ReadonlySet<number>,
): void {
  const canvas = el<HTMLCanvasElement>(id);
  const ctx = canvas.getContext("2d")!;
  if (bitmap === null || state.session === null) {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    return;
  }
  canvas.width = state.session.width * SCALE;
  canvas.height = state.session.height * SCALE;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(bitmap, 0, 0, canvas.width, canvas.height);
  drawDetections(ctx, detections, selected, SCALE);
}

function render(): void {
  const session = state.session;
  el<HTMLDivElement>("error").textContent = state.error ?? "";
  el<HTMLDivElement>("phase").textContent = state.phase;

  const sensitiveControls = el<HTMLDivElement>("sensitive-controls");
  sensitiveControls.style.display = state.mode === "sensitive" ? "block" : "none";

  if (session !== null) {
    renderCanvas("before", originalBitmap, session.detections, state.selectedBoxes);
    el<HTMLDivElement>("predetect").textContent =
      session.detections.length === 0
        ? "no objects detected"
        : `${session.detections.length} detection(s) — click boxes to mark sensitive`;

    const picker = el<HTMLDivElement>("categories");
    picker.innerHTML = "";
    for (const name of session.categories) {
      const button = document.createElement("button");
      button.textContent = state.selectedCategories.has(name) ? `☑ ${name}` : `☐ ${name}`;
      button.onclick = () => setState(toggleCategory(state, name));
      picker.appendChild(button);
    }
    const target = el<HTMLSelectElement>("target");
    if (target.options.length !== session.categories.length) {
      target.innerHTML = "";
      for (const name of session.categories) {
        const option = document.createElement("option");
        option.value = name;
        option.textContent = name;
        target.appendChild(option);
      }
    }
  }

  el<HTMLDivElement>("badges").textContent = selectionBadges(state).join(", ");
  const block = state.session === null ? "upload an image first" : submissionBlock(state);
  const submit = el<HTMLButtonElement>("submit");
  submit.disabled = block !== null;
  submit.title = block ?? "";

  const last = state.trace[state.trace.length - 1];
  el<HTMLDivElement>("progress").textContent = last
    ? `iteration ${last.i}: s_max=${last.s_max.toFixed(4)}`
    : "";

  const resultBox = el<HTMLDivElement>("result");
  resultBox.style.display = state.phase === "done" && state.result !== null ? "block" : "none";
  if (state.phase === "done" && state.result !== null && session !== null) {
    renderCanvas("after", resultBitmap, state.result.detections, new Set());
    const r = state.result;
    el<HTMLDivElement>("metrics").textContent =
      `${r.succeeded ? "protected" : "NOT protected"} in ${r.iterations_used} iterations — ` +
      `PSNR ${r.psnr === null ? "∞" : r.psnr.toFixed(2) + " dB"}, SSIM ${r.ssim.toFixed(3)} — ` +
      `sha256 ${resultChecksum.slice(0, 16)}…`;
    el<HTMLDivElement>("after-note").textContent =
      r.detections.length === 0 ? "no objects detected" : `${r.detections.length} detection(s) remain`;
  }
}

function wire(): void {
  el<HTMLInputElement>("file").addEventListener("change", (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (file) void onFileChosen(file);
  });
  el<HTMLCanvasElement>("before").addEventListener("click", onCanvasClick);
  el<HTMLButtonElement>("submit").addEventListener("click", () => void onSubmit());

  const modeAll = el<HTMLInputElement>("mode-all");
  const modeSensitive = el<HTMLInputElement>("mode-sensitive");
  const syncMode = () =>
    setState({ ...state, mode: modeSensitive.checked ? "sensitive" : "all" });
  modeAll.addEventListener("change", syncMode);
  modeSensitive.addEventListener("change", syncMode);

  const slider = el<HTMLInputElement>("epsilon");
  slider.min = String(EPSILON_SLIDER_STEPS[0]);
  slider.max = String(EPSILON_SLIDER_STEPS[EPSILON_SLIDER_STEPS.length - 1]);
  slider.value = String(DEFAULT_EPSILON_STEP);
  const syncEpsilon = () => {
    el<HTMLSpanElement>("epsilon-label").textContent = `${slider.value}/255`;
    setState({ ...state, epsilonStep: Number(slider.value) });
  };
  slider.addEventListener("input", syncEpsilon);
  syncEpsilon();

  el<HTMLSelectElement>("target").addEventListener("change", (event) =>
    setState({ ...state, targetCategory: (event.target as HTMLSelectElement).value }),
  );
  el<HTMLInputElement>("threshold").addEventListener("change", (event) =>
    setState({ ...state, threshold: Number((event.target as HTMLInputElement).value) }),
  );
  el<HTMLInputElement>("max-iterations").addEventListener("change", (event) =>
    setState({ ...state, maxIterations: Number((event.target as HTMLInputElement).value) }),
  );
  render();
}

wire();

import {
  AttackRequest,
  JobResult,
  JobResultSchema,
  JobState,
  JobStateSchema,
  SessionResponse,
  SessionResponseSchema,
  SubmitResponseSchema,
} from "./schema";

/** Thin typed client over the local /v1 API; every response is validated
 * against the shared schemas before it reaches UI code. */

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
  }
}

async function parseError(response: Response): Promise<never> {
  let detail: unknown = response.statusText;
  try {
    detail = (await response.json()).detail;
  } catch {
    /* non-JSON error body: keep the status text */
  }
  throw new ApiError(response.status, detail);
}

export async function createSession(imageBytes: Uint8Array, base = ""): Promise<SessionResponse> {
  const response = await fetch(`${base}/v1/sessions`, {
    method: "POST",
    headers: { "Content-Type": "application/octet-stream" },
    body: imageBytes.slice().buffer,
  });
  if (!response.ok) await parseError(response);
  return SessionResponseSchema.parse(await response.json());
}

export async function submitAttack(
  sessionId: string,
  request: AttackRequest,
  base = "",
): Promise<string> {
  const response = await fetch(`${base}/v1/sessions/${sessionId}/attacks`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(request),
  });
  if (!response.ok) await parseError(response);
  return SubmitResponseSchema.parse(await response.json()).job_id;
}

export async function getJobState(jobId: string, base = ""): Promise<JobState> {
  const response = await fetch(`${base}/v1/jobs/${jobId}`);
  if (!response.ok) await parseError(response);
  return JobStateSchema.parse(await response.json());
}

export async function getJobResult(jobId: string, base = ""): Promise<JobResult> {
  const response = await fetch(`${base}/v1/jobs/${jobId}/result`);
  if (!response.ok) await parseError(response);
  return JobResultSchema.parse(await response.json());
}

/** Poll until the job reaches a terminal state, reporting trace progress. */
export async function pollUntilDone(
  jobId: string,
  onProgress: (state: JobState) => void,
  base = "",
  intervalMs = 250,
): Promise<JobState> {
  for (;;) {
    const state = await getJobState(jobId, base);
    onProgress(state);
    if (state.state === "done" || state.state === "failed") return state;
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
}

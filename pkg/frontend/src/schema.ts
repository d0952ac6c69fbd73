import { z } from "zod";

/** Mirror of the /v1 request and response contracts. */

export const MAX_EPSILON = 16 / 255;

/** Accepts a decimal or "k/255" string; returns the numeric value. */
export function parseEpsilon(value: number | string): number {
  let parsed: number;
  if (typeof value === "string") {
    const match = value.match(/^\s*([\d.]+)\s*(?:\/\s*([\d.]+))?\s*$/);
    if (!match) throw new Error(`epsilon ${JSON.stringify(value)} is neither decimal nor k/255`);
    parsed = match[2] ? Number(match[1]) / Number(match[2]) : Number(match[1]);
  } else {
    parsed = value;
  }
  if (!Number.isFinite(parsed) || parsed <= 0 || parsed > MAX_EPSILON) {
    throw new Error(`epsilon must be in (0, ${MAX_EPSILON.toFixed(4)}]`);
  }
  return parsed;
}

export const DetectionSchema = z.object({
  index: z.number().int().nonnegative(),
  box: z.tuple([z.number(), z.number(), z.number(), z.number()]),
  category_index: z.number().int().nonnegative(),
  category: z.string(),
  score: z.number().min(0).max(1),
});
export type Detection = z.infer<typeof DetectionSchema>;

export const SessionResponseSchema = z.object({
  session_id: z.string(),
  width: z.number().int().positive(),
  height: z.number().int().positive(),
  categories: z.array(z.string()).nonempty(),
  detections: z.array(DetectionSchema),
});
export type SessionResponse = z.infer<typeof SessionResponseSchema>;

export const AttackRequestSchema = z
  .object({
    mode: z.enum(["all", "sensitive"]),
    sensitive_categories: z.array(z.string()).default([]),
    box_indices: z.array(z.number().int().nonnegative()).default([]),
    target_category: z.string().nullable().default(null),
    epsilon: z.union([z.number(), z.string()]).default("3/255"),
    threshold: z.number().gt(0).lt(1).default(0.3),
    max_iterations: z.number().int().min(1).default(150),
  })
  .superRefine((req, ctx) => {
    try {
      parseEpsilon(req.epsilon);
    } catch (err) {
      ctx.addIssue({ code: z.ZodIssueCode.custom, path: ["epsilon"], message: String(err) });
    }
    if (req.mode === "sensitive") {
      if (req.sensitive_categories.length === 0 && req.box_indices.length === 0) {
        ctx.addIssue({
          code: z.ZodIssueCode.custom,
          path: ["sensitive_categories"],
          message: "select at least one box or category before submitting",
        });
      }
      if (req.target_category === null) {
        ctx.addIssue({
          code: z.ZodIssueCode.custom,
          path: ["target_category"],
          message: "sensitive mode requires a disguise category",
        });
      } else if (req.sensitive_categories.includes(req.target_category)) {
        ctx.addIssue({
          code: z.ZodIssueCode.custom,
          path: ["target_category"],
          message: "the disguise category must not itself be sensitive",
        });
      }
    }
  });
export type AttackRequest = z.infer<typeof AttackRequestSchema>;

export const SubmitResponseSchema = z.object({ job_id: z.string() });

export const TraceEntrySchema = z.object({
  i: z.number().int().positive(),
  s_max: z.number().min(0).max(1),
  loss: z.number(),
});
export type TraceEntry = z.infer<typeof TraceEntrySchema>;

export const JobStateSchema = z.object({
  job_id: z.string(),
  state: z.enum(["queued", "running", "done", "failed"]),
  trace: z.array(TraceEntrySchema),
  error: z.string().nullable(),
});
export type JobState = z.infer<typeof JobStateSchema>;

export const JobResultSchema = z.object({
  succeeded: z.boolean(),
  iterations_used: z.number().int().nonnegative(),
  image_base64: z.string(),
  detections: z.array(DetectionSchema),
  psnr: z.number().nullable(),
  ssim: z.number(),
});
export type JobResult = z.infer<typeof JobResultSchema>;

/** The epsilon slider exposes k/255 for k in 1..10; k=3 is preselected. */
export const EPSILON_SLIDER_STEPS = Array.from({ length: 10 }, (_, i) => i + 1);
export const DEFAULT_EPSILON_STEP = 3;

import { z } from "zod";

export const corpusRecordSchema = z.object({
  utt_id: z.string().min(1),
  speaker_id: z.string().min(1),
  session_id: z.string(),
  sex: z.union([z.literal("F"), z.literal("M"), z.null()]).optional(),
  text: z.string().refine((t) => t.trim().length > 0, {
    message: "text must be non-empty",
  }),
});

export type CorpusRecord = z.infer<typeof corpusRecordSchema>;

export const embeddingRecordSchema = z.object({
  utt_id: z.string().min(1),
  speaker_id: z.string().min(1),
  sex: z.union([z.literal("F"), z.literal("M"), z.null()]),
  vector: z.array(z.number().finite()).min(1),
});

export type EmbeddingRecord = z.infer<typeof embeddingRecordSchema>;

export type Pooling = "cls_token" | "mean";

export interface BridgeConfig {
  model: string;
  pooling: Pooling;
  outputDim?: number;
  batchSize: number;
  device: string;
}

/** A loaded embedding model: token-level vectors plus pooling. */
export interface EmbeddingModel {
  id: string;
  outputDim: number;
  /** Embed a batch of texts under the given pooling mode. */
  embedBatch(texts: string[], pooling: Pooling): Promise<number[][]>;
}

export class ModelLoadFailure extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ModelLoadFailure";
  }
}

export class SchemaViolation extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaViolation";
  }
}

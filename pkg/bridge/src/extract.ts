import * as fs from "node:fs";

import { readCorpus } from "./corpus.js";
import { loadModel } from "./models.js";
import {
  BridgeConfig,
  EmbeddingRecord,
  embeddingRecordSchema,
  SchemaViolation,
} from "./types.js";

/**
 * Embed every utterance of a corpus and write embedding-record NDJSON
 * (the exact ingestion format of the evaluation toolkit), preserving
 * corpus order and identities. A sidecar `<out>.meta.json` records the
 * model id, pooling mode, and dimension.
 */
export async function extract(
  corpusPath: string,
  config: BridgeConfig,
  outPath: string,
): Promise<EmbeddingRecord[]> {
  const corpus = readCorpus(corpusPath);
  const model = await loadModel(config.model, config.outputDim);

  const records: EmbeddingRecord[] = [];
  for (let start = 0; start < corpus.length; start += config.batchSize) {
    const batch = corpus.slice(start, start + config.batchSize);
    const vectors = await model.embedBatch(
      batch.map((r) => r.text),
      config.pooling,
    );
    for (let i = 0; i < batch.length; i++) {
      const record: EmbeddingRecord = {
        utt_id: batch[i].utt_id,
        speaker_id: batch[i].speaker_id,
        sex: batch[i].sex ?? null,
        vector: vectors[i],
      };
      const check = embeddingRecordSchema.safeParse(record);
      if (!check.success) {
        throw new SchemaViolation(
          `embedding for ${record.utt_id} violates the output schema: ` +
            `${check.error.issues[0]?.message}`,
        );
      }
      if (record.vector.length !== model.outputDim) {
        throw new SchemaViolation(
          `embedding for ${record.utt_id} has dimension ` +
            `${record.vector.length}, expected ${model.outputDim}`,
        );
      }
      records.push(record);
    }
  }

  const lines = records.map((r) => JSON.stringify(r)).join("\n");
  fs.writeFileSync(outPath, lines + (records.length ? "\n" : ""), "utf-8");
  fs.writeFileSync(
    `${outPath}.meta.json`,
    JSON.stringify(
      {
        model: model.id,
        pooling: config.pooling,
        output_dim: model.outputDim,
        num_records: records.length,
      },
      null,
      2,
    ) + "\n",
    "utf-8",
  );
  return records;
}

import * as fs from "node:fs";

import { CorpusRecord, corpusRecordSchema, SchemaViolation } from "./types.js";

/** Read and validate a corpus NDJSON file, preserving line order. */
export function readCorpus(path: string): CorpusRecord[] {
  const raw = fs.readFileSync(path, "utf-8");
  const records: CorpusRecord[] = [];
  const seen = new Set<string>();
  const lines = raw.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch (err) {
      throw new SchemaViolation(`line ${i + 1}: not valid JSON (${err})`);
    }
    const result = corpusRecordSchema.safeParse(parsed);
    if (!result.success) {
      throw new SchemaViolation(
        `line ${i + 1}: ${result.error.issues[0]?.message ?? "bad record"}`,
      );
    }
    if (seen.has(result.data.utt_id)) {
      throw new SchemaViolation(
        `line ${i + 1}: duplicate utt_id ${result.data.utt_id}`,
      );
    }
    seen.add(result.data.utt_id);
    records.push(result.data);
  }
  return records;
}

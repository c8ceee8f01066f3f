#!/usr/bin/env node
import { extract } from "./extract.js";
import {
  BridgeConfig,
  ModelLoadFailure,
  Pooling,
  SchemaViolation,
} from "./types.js";

const USAGE = `Usage: extern-embed --corpus <in.ndjson> --model <id> --out <emb.ndjson>
    [--pooling cls_token|mean] [--dim <n>] [--batch-size <n>] [--device <hint>]

Models:
  hash-<dim>            built-in deterministic hashed token projections
  transformers:<hf-id>  pretrained model via @huggingface/transformers`;

function parseArgs(argv: string[]): {
  corpus: string;
  out: string;
  config: BridgeConfig;
} {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) {
      throw new Error(`bad argument ${key}`);
    }
    flags.set(key.slice(2), value);
  }
  const corpus = flags.get("corpus");
  const model = flags.get("model");
  const out = flags.get("out");
  if (!corpus || !model || !out) {
    throw new Error("missing required flag");
  }
  const pooling = (flags.get("pooling") ?? "mean") as Pooling;
  if (pooling !== "cls_token" && pooling !== "mean") {
    throw new Error(`bad pooling ${pooling}`);
  }
  const config: BridgeConfig = {
    model,
    pooling,
    outputDim: flags.has("dim")
      ? parseInt(flags.get("dim") as string, 10)
      : undefined,
    batchSize: parseInt(flags.get("batch-size") ?? "64", 10),
    device: flags.get("device") ?? "cpu",
  };
  if (!(config.batchSize >= 1)) {
    throw new Error("batch-size must be >= 1");
  }
  return { corpus, out, config };
}

export async function main(argv: string[]): Promise<number> {
  let parsed: ReturnType<typeof parseArgs>;
  try {
    parsed = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    console.error(USAGE);
    return 1;
  }
  try {
    const records = await extract(parsed.corpus, parsed.config, parsed.out);
    console.log(
      `ok: ${records.length} embeddings (${parsed.config.model}, ` +
        `${parsed.config.pooling} pooling) -> ${parsed.out}`,
    );
    return 0;
  } catch (err) {
    if (err instanceof SchemaViolation || err instanceof ModelLoadFailure) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    if ((err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`error: ${(err as Error).message}`);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;

if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}

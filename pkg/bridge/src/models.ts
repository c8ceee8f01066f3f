import { EmbeddingModel, ModelLoadFailure, Pooling } from "./types.js";

/** FNV-1a 32-bit hash over the UTF-8 bytes of a string. */
export function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  const bytes = Buffer.from(text, "utf-8");
  for (const byte of bytes) {
    hash ^= byte;
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

/** mulberry32: tiny deterministic PRNG, uniform in [0, 1). */
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function hashVector(key: string, dim: number): number[] {
  const draw = mulberry32(fnv1a(key));
  const out = new Array<number>(dim);
  for (let i = 0; i < dim; i++) {
    out[i] = draw() * 2 - 1;
  }
  return out;
}

export function tokenizeText(text: string): string[] {
  return text.toLowerCase().match(/[^\W_]+/gu) ?? [];
}

/**
 * Built-in offline model: every token maps to a fixed pseudo-random
 * vector seeded by its hash. Mean pooling averages the token vectors;
 * cls_token pooling uses a single vector seeded by the whole text
 * (the model's stand-in for a context token). Fully deterministic
 * across runs and platforms.
 */
class HashedProjectionModel implements EmbeddingModel {
  constructor(
    public readonly id: string,
    public readonly outputDim: number,
  ) {}

  private embedOne(text: string, pooling: Pooling): number[] {
    if (pooling === "cls_token") {
      return hashVector(`cls|${text.toLowerCase().trim()}`, this.outputDim);
    }
    const tokens = tokenizeText(text);
    if (tokens.length === 0) {
      // token-free text still needs a usable, non-zero embedding
      return hashVector(`cls|${text.toLowerCase().trim()}`, this.outputDim);
    }
    const sum = new Array<number>(this.outputDim).fill(0);
    for (const token of tokens) {
      const vec = hashVector(`tok|${token}`, this.outputDim);
      for (let i = 0; i < this.outputDim; i++) {
        sum[i] += vec[i];
      }
    }
    return sum.map((v) => v / tokens.length);
  }

  async embedBatch(texts: string[], pooling: Pooling): Promise<number[][]> {
    return texts.map((t) => this.embedOne(t, pooling));
  }
}

/**
 * Pretrained transformer route via transformers.js. Requires the
 * package to be installed and the model weights to be reachable
 * (network or local cache); otherwise loading reports ModelLoadFailure.
 */
class TransformersModel implements EmbeddingModel {
  private constructor(
    public readonly id: string,
    public readonly outputDim: number,
    private readonly extractor: (
      texts: string[],
      options: { pooling: string; normalize: boolean },
    ) => Promise<{ tolist(): number[][] }>,
  ) {}

  static async load(modelId: string): Promise<TransformersModel> {
    let pipeline: unknown;
    try {
      const mod = await import(
        /* @vite-ignore */ "@huggingface/transformers" as string
      );
      pipeline = (mod as { pipeline: unknown }).pipeline;
    } catch (err) {
      throw new ModelLoadFailure(
        `transformers.js is not installed (${err}); install ` +
          `@huggingface/transformers or use a built-in hash-<dim> model`,
      );
    }
    try {
      const extractor = await (
        pipeline as (task: string, model: string) => Promise<never>
      )("feature-extraction", modelId);
      const probe = await (
        extractor as unknown as TransformersModel["extractor"]
      )(["probe"], { pooling: "mean", normalize: false });
      const dim = probe.tolist()[0].length;
      return new TransformersModel(
        modelId,
        dim,
        extractor as unknown as TransformersModel["extractor"],
      );
    } catch (err) {
      throw new ModelLoadFailure(`could not load model ${modelId}: ${err}`);
    }
  }

  async embedBatch(texts: string[], pooling: Pooling): Promise<number[][]> {
    const mode = pooling === "cls_token" ? "cls" : "mean";
    const result = await this.extractor(texts, {
      pooling: mode,
      normalize: false,
    });
    return result.tolist();
  }
}

const HASH_MODEL_RE = /^hash-(\d+)$/;

export async function loadModel(
  modelId: string,
  outputDim?: number,
): Promise<EmbeddingModel> {
  const hashMatch = HASH_MODEL_RE.exec(modelId);
  if (hashMatch) {
    const dim = parseInt(hashMatch[1], 10);
    if (dim < 1) {
      throw new ModelLoadFailure(`bad dimension in model id ${modelId}`);
    }
    if (outputDim !== undefined && outputDim !== dim) {
      throw new ModelLoadFailure(
        `model ${modelId} has dimension ${dim}, but --dim ${outputDim} was given`,
      );
    }
    return new HashedProjectionModel(modelId, dim);
  }
  if (modelId.startsWith("transformers:")) {
    const model = await TransformersModel.load(
      modelId.slice("transformers:".length),
    );
    if (outputDim !== undefined && outputDim !== model.outputDim) {
      throw new ModelLoadFailure(
        `model ${modelId} emits ${model.outputDim}-d vectors, ` +
          `but --dim ${outputDim} was given`,
      );
    }
    return model;
  }
  throw new ModelLoadFailure(
    `unknown model ${modelId}; use hash-<dim> or transformers:<hf-id>`,
  );
}

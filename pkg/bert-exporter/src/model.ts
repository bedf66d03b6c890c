/**
 * Deterministic BERT-style encoder with procedurally generated weights.
 *
 * Every parameter tensor is drawn from a PRNG seeded by the model name and
 * the parameter's own name, so a given model name always denotes the same
 * fixed network: two processes, two machines, two runs all see identical
 * weights. Inference only; there is no training path.
 */

export interface EncoderConfig {
  hidden: number;
  layers: number;
  heads: number;
  ffnMult: number;
  maxLen: number;
}

export const MODELS: Record<string, EncoderConfig> = {
  "seeded-base": { hidden: 768, layers: 2, heads: 12, ffnMult: 2, maxLen: 32 },
  "seeded-tiny": { hidden: 64, layers: 2, heads: 4, ffnMult: 2, maxLen: 32 },
};

export class ModelLoadError extends Error {}

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** mulberry32: tiny, fast, and good enough for weight noise. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussianFill(out: Float32Array, seed: number, std: number, mean = 0) {
  const rand = mulberry32(seed);
  for (let i = 0; i < out.length; i += 2) {
    // Box-Muller; u is kept away from 0 so log stays finite
    const u = rand() + 1e-12;
    const v = rand();
    const r = Math.sqrt(-2 * Math.log(u));
    out[i] = mean + std * r * Math.cos(2 * Math.PI * v);
    if (i + 1 < out.length) out[i + 1] = mean + std * r * Math.sin(2 * Math.PI * v);
  }
}

function gelu(x: number): number {
  return 0.5 * x * (1 + Math.tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

/** X (rows x inner) @ W (inner x cols) + b, flat row-major buffers. */
function affine(
  x: Float32Array, rows: number, inner: number,
  w: Float32Array, cols: number, b: Float32Array,
): Float32Array {
  const out = new Float32Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    const xOff = r * inner;
    const oOff = r * cols;
    for (let c = 0; c < cols; c++) out[oOff + c] = b[c];
    for (let k = 0; k < inner; k++) {
      const xv = x[xOff + k];
      if (xv === 0) continue;
      const wOff = k * cols;
      for (let c = 0; c < cols; c++) out[oOff + c] += xv * w[wOff + c];
    }
  }
  return out;
}

function layerNorm(
  x: Float32Array, rows: number, dim: number,
  gamma: Float32Array, beta: Float32Array,
): Float32Array {
  const out = new Float32Array(rows * dim);
  for (let r = 0; r < rows; r++) {
    const off = r * dim;
    let mean = 0;
    for (let d = 0; d < dim; d++) mean += x[off + d];
    mean /= dim;
    let varSum = 0;
    for (let d = 0; d < dim; d++) {
      const c = x[off + d] - mean;
      varSum += c * c;
    }
    const inv = 1 / Math.sqrt(varSum / dim + 1e-5);
    for (let d = 0; d < dim; d++) {
      out[off + d] = gamma[d] * (x[off + d] - mean) * inv + beta[d];
    }
  }
  return out;
}

export class SeededEncoder {
  readonly name: string;
  readonly config: EncoderConfig;
  readonly vocabSize: number;
  private readonly params = new Map<string, Float32Array>();

  constructor(name: string, vocabSize: number) {
    const config = MODELS[name];
    if (!config) {
      throw new ModelLoadError(
        `unknown model '${name}'; available: ${Object.keys(MODELS).join(", ")}`,
      );
    }
    this.name = name;
    this.config = config;
    this.vocabSize = vocabSize;
  }

  private param(paramName: string, size: number, std: number, mean = 0): Float32Array {
    let p = this.params.get(paramName);
    if (!p) {
      p = new Float32Array(size);
      gaussianFill(p, fnv1a(`${this.name}/${paramName}`), std, mean);
      this.params.set(paramName, p);
    }
    return p;
  }

  private norm(tag: string, x: Float32Array, rows: number): Float32Array {
    const d = this.config.hidden;
    return layerNorm(x, rows, d,
                     this.param(`${tag}.gamma`, d, 0.02, 1.0),
                     this.param(`${tag}.beta`, d, 0.02));
  }

  /**
   * Hidden states for a wrapped id sequence ([CLS] ... [SEP]).
   *
   * Returns one (seq x hidden) buffer per captured layer: index 0 is the
   * embedding output, index L the L-th transformer block. Row r of a buffer
   * is the state of input position r.
   */
  forward(ids: number[]): Float32Array[] {
    const { hidden: d, heads, layers, ffnMult, maxLen } = this.config;
    const s = ids.length;
    if (s === 0) throw new ModelLoadError("empty id sequence");
    if (s > maxLen) {
      throw new ModelLoadError(`sequence of ${s} exceeds model max length ${maxLen}`);
    }
    const tokTable = this.param("embed.token", this.vocabSize * d, 0.02);
    const posTable = this.param("embed.pos", maxLen * d, 0.02);

    let x: Float32Array = new Float32Array(s * d);
    for (let r = 0; r < s; r++) {
      const id = ids[r];
      if (id < 0 || id >= this.vocabSize) {
        throw new ModelLoadError(`token id ${id} outside vocabulary of ${this.vocabSize}`);
      }
      for (let k = 0; k < d; k++) {
        x[r * d + k] = tokTable[id * d + k] + posTable[r * d + k];
      }
    }
    x = this.norm("embed.ln", x, s);

    const captured = [x];
    const headDim = d / heads;
    const ffn = d * ffnMult;
    for (let layer = 0; layer < layers; layer++) {
      const lp = (suffix: string) => `block${layer}.${suffix}`;
      const q = affine(x, s, d, this.param(lp("wq"), d * d, 0.02), d,
                       this.param(lp("bq"), d, 0.02));
      const k = affine(x, s, d, this.param(lp("wk"), d * d, 0.02), d,
                       this.param(lp("bk"), d, 0.02));
      const v = affine(x, s, d, this.param(lp("wv"), d * d, 0.02), d,
                       this.param(lp("bv"), d, 0.02));

      const mixed = new Float32Array(s * d);
      const scores = new Float32Array(s);
      for (let h = 0; h < heads; h++) {
        const hOff = h * headDim;
        for (let r = 0; r < s; r++) {
          let maxScore = -Infinity;
          for (let c = 0; c < s; c++) {
            let dot = 0;
            for (let e = 0; e < headDim; e++) {
              dot += q[r * d + hOff + e] * k[c * d + hOff + e];
            }
            scores[c] = dot / Math.sqrt(headDim);
            if (scores[c] > maxScore) maxScore = scores[c];
          }
          let z = 0;
          for (let c = 0; c < s; c++) {
            scores[c] = Math.exp(scores[c] - maxScore);
            z += scores[c];
          }
          for (let c = 0; c < s; c++) {
            const wgt = scores[c] / z;
            for (let e = 0; e < headDim; e++) {
              mixed[r * d + hOff + e] += wgt * v[c * d + hOff + e];
            }
          }
        }
      }
      const attnOut = affine(mixed, s, d, this.param(lp("wo"), d * d, 0.02), d,
                             this.param(lp("bo"), d, 0.02));
      for (let i = 0; i < x.length; i++) attnOut[i] += x[i];
      x = this.norm(lp("ln1"), attnOut, s);

      const up = affine(x, s, d, this.param(lp("w1"), d * ffn, 0.02), ffn,
                        this.param(lp("b1"), ffn, 0.02));
      for (let i = 0; i < up.length; i++) up[i] = gelu(up[i]);
      const downProj = affine(up, s, ffn, this.param(lp("w2"), ffn * d, 0.02), d,
                              this.param(lp("b2"), d, 0.02));
      for (let i = 0; i < x.length; i++) downProj[i] += x[i];
      x = this.norm(lp("ln2"), downProj, s);
      captured.push(x);
    }
    return captured;
  }

  /** Per-position rows of one captured layer; "last" picks the top block. */
  hiddenRows(ids: number[], layer: string | number = "last"): Float32Array[] {
    const captured = this.forward(ids);
    let index: number;
    if (layer === "last") {
      index = captured.length - 1;
    } else {
      index = Number(layer);
      if (!Number.isInteger(index) || index < 0 || index >= captured.length) {
        throw new ModelLoadError(
          `layer must be "last" or 0..${captured.length - 1}, got '${layer}'`,
        );
      }
    }
    const d = this.config.hidden;
    const flat = captured[index];
    const rows: Float32Array[] = [];
    for (let r = 0; r < ids.length; r++) {
      rows.push(flat.slice(r * d, (r + 1) * d));
    }
    return rows;
  }
}

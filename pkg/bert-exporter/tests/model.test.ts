import { describe, expect, it } from "vitest";
import { MODELS, ModelLoadError, SeededEncoder } from "../src/model.js";
import { WordPieceTokenizer } from "../src/tokenizer.js";

const tok = new WordPieceTokenizer();
const V = tok.vocabSize;

function maxAbsDiff(a: Float32Array, b: Float32Array): number {
  let m = 0;
  for (let i = 0; i < a.length; i++) m = Math.max(m, Math.abs(a[i] - b[i]));
  return m;
}

describe("SeededEncoder construction", () => {
  it("rejects unknown model names and lists the known ones", () => {
    expect(() => new SeededEncoder("bert-base-uncased", V))
      .toThrow(/unknown model 'bert-base-uncased'.*seeded-base/);
  });
});

describe("determinism", () => {
  it("two independent instances produce bit-identical states", () => {
    const ids = tok.encode("the cat sat");
    const a = new SeededEncoder("seeded-tiny", V).hiddenRows(ids);
    const b = new SeededEncoder("seeded-tiny", V).hiddenRows(ids);
    expect(a.length).toBe(b.length);
    for (let r = 0; r < a.length; r++) {
      expect(maxAbsDiff(a[r], b[r])).toBe(0);
    }
  });

  it("different model names give different weights", () => {
    const ids = tok.encode("the cat");
    const base = new SeededEncoder("seeded-base", V).hiddenRows(ids);
    const again = new SeededEncoder("seeded-base", V).hiddenRows(ids);
    expect(maxAbsDiff(base[1], again[1])).toBe(0);
    // tiny has a different width entirely; compare base against a re-seed
    // of itself under another name is impossible, so check the registry
    // at least distinguishes the configs it promises.
    expect(MODELS["seeded-base"].hidden).toBe(768);
    expect(MODELS["seeded-tiny"].hidden).toBe(64);
  });
});

describe("forward", () => {
  it("emits hidden states of the configured width", () => {
    const ids = tok.encode("the cat sat down");
    const rows = new SeededEncoder("seeded-base", V).hiddenRows(ids);
    expect(rows).toHaveLength(6); // CLS + 4 pieces + SEP
    for (const row of rows) expect(row).toHaveLength(768);
  });

  it("is position sensitive: the same token differs by position", () => {
    const enc = new SeededEncoder("seeded-tiny", V);
    const catId = tok.idOf("cat");
    const rows = enc.hiddenRows([tok.idOf("[CLS]"), catId, catId, tok.idOf("[SEP]")]);
    expect(maxAbsDiff(rows[1], rows[2])).toBeGreaterThan(1e-4);
  });

  it("is context sensitive: neighbours change a token's state", () => {
    const enc = new SeededEncoder("seeded-tiny", V);
    const a = enc.hiddenRows(tok.encode("the cat"));
    const b = enc.hiddenRows(tok.encode("a cat"));
    // "cat" sits at position 2 in both, only the neighbour differs
    expect(maxAbsDiff(a[2], b[2])).toBeGreaterThan(1e-4);
  });

  it("produces finite values everywhere", () => {
    const rows = new SeededEncoder("seeded-base", V)
      .hiddenRows(tok.encode("the quick brown fox jumps!"));
    for (const row of rows) {
      for (const x of row) expect(Number.isFinite(x)).toBe(true);
    }
  });

  it("enforces the model's maximum sequence length", () => {
    const enc = new SeededEncoder("seeded-tiny", V);
    const ids = new Array(MODELS["seeded-tiny"].maxLen + 1).fill(tok.idOf("a"));
    expect(() => enc.hiddenRows(ids)).toThrow(/max length/);
  });

  it("rejects out-of-vocabulary ids", () => {
    const enc = new SeededEncoder("seeded-tiny", V);
    expect(() => enc.hiddenRows([0, V, 3])).toThrow(/outside vocabulary/);
  });
});

describe("layer selection", () => {
  const enc = new SeededEncoder("seeded-tiny", V);
  const ids = tok.encode("the cat");

  it('"last" equals the numerically top block', () => {
    const last = enc.hiddenRows(ids, "last");
    const top = enc.hiddenRows(ids, MODELS["seeded-tiny"].layers);
    for (let r = 0; r < last.length; r++) {
      expect(maxAbsDiff(last[r], top[r])).toBe(0);
    }
  });

  it("different layers hold different states", () => {
    const embed = enc.hiddenRows(ids, 0);
    const last = enc.hiddenRows(ids, "last");
    expect(maxAbsDiff(embed[1], last[1])).toBeGreaterThan(1e-4);
  });

  it("rejects out-of-range or malformed layer picks", () => {
    expect(() => enc.hiddenRows(ids, 99)).toThrow(ModelLoadError);
    expect(() => enc.hiddenRows(ids, -1)).toThrow(ModelLoadError);
    expect(() => enc.hiddenRows(ids, "middle")).toThrow(ModelLoadError);
  });
});

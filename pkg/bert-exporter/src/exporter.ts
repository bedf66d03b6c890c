/**
 * End-to-end export: TSV sentences -> tokenizer -> encoder -> embedding file.
 *
 * Input is one record per line, `id<TAB>text`. Each sentence is encoded as
 * [CLS] piece... [SEP]; the [CLS] row is dropped from the output (it is a
 * whole-sentence summary, not a token state) while the [SEP] row is kept, so
 * a sentence of N wordpieces yields N+1 vectors — matching consumers that
 * reserve one trailing slot per utterance for an end-of-sequence state.
 */

import { EmbeddingRecord, encodeEmbeddingFile } from "./format.js";
import { WordPieceTokenizer } from "./tokenizer.js";
import { SeededEncoder } from "./model.js";

export class InputError extends Error {}

export interface ExportOptions {
  model: string;
  layer?: string | number;
}

export interface ExportResult {
  bytes: Uint8Array;
  records: number;
  dim: number;
}

interface ParsedLine {
  id: string;
  text: string;
  line: number;
}

/** Split TSV content into (id, text) pairs; blank lines are skipped. */
export function parseTsv(content: string): ParsedLine[] {
  const out: ParsedLine[] = [];
  const seen = new Set<string>();
  const lines = content.split("\n");
  for (let n = 0; n < lines.length; n++) {
    const line = lines[n].replace(/\r$/, "");
    if (line.trim() === "") continue;
    const tab = line.indexOf("\t");
    if (tab < 0) {
      throw new InputError(`line ${n + 1}: expected id<TAB>text, no tab found`);
    }
    const id = line.slice(0, tab).trim();
    const text = line.slice(tab + 1);
    if (id === "") {
      throw new InputError(`line ${n + 1}: empty id`);
    }
    if (seen.has(id)) {
      throw new InputError(`line ${n + 1}: duplicate id '${id}'`);
    }
    seen.add(id);
    out.push({ id, text, line: n + 1 });
  }
  return out;
}

/** Encode every sentence in `content` and serialize the result. */
export function exportEmbeddings(content: string, options: ExportOptions): ExportResult {
  const tokenizer = new WordPieceTokenizer();
  const encoder = new SeededEncoder(options.model, tokenizer.vocabSize);
  const layer = options.layer ?? "last";
  const maxLen = encoder.config.maxLen;

  const parsed = parseTsv(content);
  const records: EmbeddingRecord[] = [];
  for (const { id, text, line } of parsed) {
    const ids = tokenizer.encode(text);
    if (ids.length > maxLen) {
      throw new InputError(
        `line ${line} ('${id}'): ${ids.length} tokens with [CLS]/[SEP] ` +
        `exceeds model max length ${maxLen}`,
      );
    }
    const rows = encoder.hiddenRows(ids, layer);
    records.push({ id, vectors: rows.slice(1) });
  }
  return {
    bytes: encodeEmbeddingFile(encoder.config.hidden, records),
    records: records.length,
    dim: encoder.config.hidden,
  };
}

/**
 * Binary embedding container shared with the cifkd teacher module.
 *
 * Layout (all integers little-endian):
 * - 8 bytes: magic "HKDEMB1\0"
 * - uint32: format version (1)
 * - uint32: embedding dimension D
 * - uint32: record count
 * - per record:
 *   - uint32: utterance id byte length, then that many UTF-8 bytes
 *   - uint32: token count I
 *   - I * D float32 values, row-major
 */

export const MAGIC = "HKDEMB1\0";
export const VERSION = 1;

export interface EmbeddingRecord {
  id: string;
  /** One Float32Array of length D per token position. */
  vectors: Float32Array[];
}

export class FormatError extends Error {}

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: true });

export function encodeEmbeddingFile(
  dim: number,
  records: EmbeddingRecord[],
): Uint8Array {
  if (!Number.isInteger(dim) || dim <= 0) {
    throw new FormatError(`dimension must be a positive integer, got ${dim}`);
  }
  const idBytes = records.map((r) => encoder.encode(r.id));
  let total = 8 + 12;
  for (let i = 0; i < records.length; i++) {
    total += 4 + idBytes[i].length + 4;
    total += records[i].vectors.length * dim * 4;
  }

  const out = new Uint8Array(total);
  const view = new DataView(out.buffer);
  let off = 0;
  for (let i = 0; i < MAGIC.length; i++) out[off++] = MAGIC.charCodeAt(i);
  view.setUint32(off, VERSION, true); off += 4;
  view.setUint32(off, dim, true); off += 4;
  view.setUint32(off, records.length, true); off += 4;

  for (let i = 0; i < records.length; i++) {
    const rec = records[i];
    view.setUint32(off, idBytes[i].length, true); off += 4;
    out.set(idBytes[i], off); off += idBytes[i].length;
    view.setUint32(off, rec.vectors.length, true); off += 4;
    for (const row of rec.vectors) {
      if (row.length !== dim) {
        throw new FormatError(
          `record '${rec.id}' has a row of width ${row.length}, expected ${dim}`,
        );
      }
      for (let d = 0; d < dim; d++) {
        view.setFloat32(off, row[d], true); off += 4;
      }
    }
  }
  return out;
}

/** Strict reader used by the tests; mirrors the consumer's validation. */
export function decodeEmbeddingFile(bytes: Uint8Array): {
  dim: number;
  records: EmbeddingRecord[];
} {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let off = 0;
  const need = (n: number, what: string) => {
    if (off + n > bytes.length) {
      throw new FormatError(`truncated file while reading ${what}`);
    }
  };

  need(8, "magic");
  for (let i = 0; i < MAGIC.length; i++) {
    if (bytes[i] !== MAGIC.charCodeAt(i)) throw new FormatError("bad magic");
  }
  off = 8;
  need(12, "header");
  const version = view.getUint32(off, true); off += 4;
  if (version !== VERSION) {
    throw new FormatError(`unsupported version ${version}`);
  }
  const dim = view.getUint32(off, true); off += 4;
  const count = view.getUint32(off, true); off += 4;

  const records: EmbeddingRecord[] = [];
  for (let r = 0; r < count; r++) {
    need(4, "id length");
    const idLen = view.getUint32(off, true); off += 4;
    need(idLen, "utterance id");
    const id = decoder.decode(bytes.subarray(off, off + idLen)); off += idLen;
    need(4, "token count");
    const length = view.getUint32(off, true); off += 4;
    need(length * dim * 4, `embeddings of '${id}'`);
    const vectors: Float32Array[] = [];
    for (let i = 0; i < length; i++) {
      const row = new Float32Array(dim);
      for (let d = 0; d < dim; d++) {
        row[d] = view.getFloat32(off, true); off += 4;
      }
      vectors.push(row);
    }
    records.push({ id, vectors });
  }
  if (off !== bytes.length) {
    throw new FormatError("trailing bytes after last record");
  }
  return { dim, records };
}

/**
 * WordPiece-style tokenizer with a built-in deterministic vocabulary.
 *
 * The vocabulary holds the four BERT specials, a list of common whole
 * words, and every lowercase letter / digit / punctuation mark both as a
 * word-initial piece and as a "##" continuation. Greedy longest-match
 * therefore always terminates: any ASCII word decomposes into character
 * pieces at worst, and only non-ASCII words map to [UNK].
 */

export const PAD = "[PAD]";
export const UNK = "[UNK]";
export const CLS = "[CLS]";
export const SEP = "[SEP]";

const COMMON_WORDS = [
  "the", "a", "an", "and", "or", "but", "if", "then", "of", "in", "on",
  "at", "to", "for", "with", "from", "by", "is", "are", "was", "were",
  "be", "been", "am", "has", "have", "had", "do", "does", "did", "not",
  "no", "yes", "it", "its", "this", "that", "these", "those", "he",
  "she", "they", "we", "you", "i", "his", "her", "their", "our", "your",
  "my", "me", "him", "them", "us", "what", "which", "who", "when",
  "where", "why", "how", "all", "any", "some", "one", "two", "three",
  "cat", "dog", "sat", "ran", "down", "up", "out", "over", "under",
  "new", "old", "good", "time", "day", "world", "hand", "word", "work",
];

const CHARS = "abcdefghijklmnopqrstuvwxyz0123456789.,!?;:'\"()-";

function buildVocab(): Map<string, number> {
  const vocab = new Map<string, number>();
  const add = (piece: string) => {
    if (!vocab.has(piece)) vocab.set(piece, vocab.size);
  };
  for (const s of [PAD, UNK, CLS, SEP]) add(s);
  for (const w of COMMON_WORDS) add(w);
  for (const c of CHARS) {
    add(c);
    add("##" + c);
  }
  return vocab;
}

const MAX_WORD_CHARS = 64;

export class WordPieceTokenizer {
  readonly vocab: Map<string, number>;

  constructor() {
    this.vocab = buildVocab();
  }

  get vocabSize(): number {
    return this.vocab.size;
  }

  idOf(piece: string): number {
    const id = this.vocab.get(piece);
    if (id === undefined) throw new Error(`piece '${piece}' not in vocabulary`);
    return id;
  }

  /** Lowercase, split punctuation apart, then whitespace-split. */
  private words(text: string): string[] {
    const spaced = text
      .toLowerCase()
      .replace(/([.,!?;:'"()-])/g, " $1 ");
    return spaced.split(/\s+/).filter((w) => w.length > 0);
  }

  private wordToPieces(word: string): string[] {
    if (word.length > MAX_WORD_CHARS) return [UNK];
    const pieces: string[] = [];
    let start = 0;
    while (start < word.length) {
      let end = word.length;
      let found: string | null = null;
      while (end > start) {
        const candidate = (start > 0 ? "##" : "") + word.slice(start, end);
        if (this.vocab.has(candidate)) {
          found = candidate;
          break;
        }
        end--;
      }
      if (found === null) return [UNK];
      pieces.push(found);
      start = end;
    }
    return pieces;
  }

  /** Wordpiece strings for the text, without any special tokens. */
  tokenize(text: string): string[] {
    const out: string[] = [];
    for (const word of this.words(text)) out.push(...this.wordToPieces(word));
    return out;
  }

  /** Ids for [CLS] tokens... [SEP], the shape the encoder consumes. */
  encode(text: string): number[] {
    const ids = [this.idOf(CLS)];
    for (const piece of this.tokenize(text)) ids.push(this.idOf(piece));
    ids.push(this.idOf(SEP));
    return ids;
  }
}
